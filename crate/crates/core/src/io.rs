//! MetaImage (`.mhd` + `.raw`) volumes and PGM slice snapshots.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::volume::{AnyVolume, Element, ElementType, Volume, VolumeMeta};

/// Reads a MetaImage header and its little-endian raw companion.
///
/// Recognised keys: `NDims`, `DimSize`, `ElementType`, `ElementDataFile`
/// (required) and `ElementSpacing` / `ElementSize`, `HeaderSize`,
/// `BinaryDataByteOrderMSB` / `ElementByteOrderMSB`, `CompressedData`,
/// `ElementNumberOfChannels` (optional). Unknown keys are ignored.
pub fn read_metaimage(path: impl AsRef<Path>) -> Result<AnyVolume> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header = parse_header(&text)?;

    let ndims: usize = parse_scalar(&header, "NDims")?;
    let dims: Vec<usize> = parse_list(&header, "DimSize")?;
    if dims.len() != ndims {
        return Err(Error::format(
            "DimSize",
            format!("{} values for NDims = {ndims}", dims.len()),
        ));
    }
    let spacing_key = ["ElementSpacing", "ElementSize"]
        .into_iter()
        .find(|k| header.contains_key(*k));
    let spacing: Vec<f64> = match spacing_key {
        Some(key) => {
            let s: Vec<f64> = parse_list(&header, key)?;
            if s.len() != ndims {
                return Err(Error::format(
                    key,
                    format!("{} values for NDims = {ndims}", s.len()),
                ));
            }
            s
        }
        None => vec![1.0; ndims],
    };
    let meta = VolumeMeta::new(&dims, &spacing)
        .map_err(|e| Error::format(spacing_key.unwrap_or("DimSize"), e.to_string()))?;

    let type_name = required(&header, "ElementType")?;
    let element_type = ElementType::from_met_name(type_name).ok_or_else(|| {
        Error::format(
            "ElementType",
            format!("unsupported element type {type_name}"),
        )
    })?;

    for key in ["BinaryDataByteOrderMSB", "ElementByteOrderMSB"] {
        if header
            .get(key)
            .is_some_and(|v| v.eq_ignore_ascii_case("true"))
        {
            return Err(Error::format(key, "big-endian data is not supported"));
        }
    }
    if header
        .get("CompressedData")
        .is_some_and(|v| v.eq_ignore_ascii_case("true"))
    {
        return Err(Error::format(
            "CompressedData",
            "compressed data is not supported",
        ));
    }
    if let Some(ch) = header.get("ElementNumberOfChannels") {
        if ch.trim() != "1" {
            return Err(Error::format(
                "ElementNumberOfChannels",
                "only single-channel volumes are supported",
            ));
        }
    }

    let data_name = required(&header, "ElementDataFile")?;
    if data_name.eq_ignore_ascii_case("LOCAL") || data_name.starts_with("LIST") {
        return Err(Error::format(
            "ElementDataFile",
            format!("{data_name} data layout is not supported"),
        ));
    }
    let raw_path = path.parent().unwrap_or(Path::new("")).join(data_name);
    let raw = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;

    let expected = meta.len() * element_type.byte_size();
    let offset = match header.get("HeaderSize") {
        None => 0,
        Some(s) => match s.trim().parse::<i64>() {
            Ok(-1) => raw.len().saturating_sub(expected),
            Ok(n) if n >= 0 => n as usize,
            _ => return Err(Error::format("HeaderSize", format!("invalid value {s}"))),
        },
    };
    if raw.len() < offset || raw.len() - offset != expected {
        return Err(Error::format(
            "ElementDataFile",
            format!(
                "{} holds {} bytes, expected {expected} for DimSize {:?} of {element_type}",
                raw_path.display(),
                raw.len().saturating_sub(offset),
                dims
            ),
        ));
    }
    let payload = &raw[offset..];

    Ok(match element_type {
        ElementType::U8 => AnyVolume::U8(decode(meta, payload)),
        ElementType::U16 => AnyVolume::U16(decode(meta, payload)),
        ElementType::U32 => AnyVolume::U32(decode(meta, payload)),
        ElementType::F64 => AnyVolume::F64(decode(meta, payload)),
    })
}

fn decode<T: Element>(meta: VolumeMeta, payload: &[u8]) -> Volume<T> {
    let data = payload
        .chunks_exact(T::TYPE.byte_size())
        .map(T::read_le)
        .collect();
    Volume::from_vec(meta, data).expect("payload size checked")
}

fn parse_header(text: &str) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::format(line, "header line is not of the form `Key = Value`"))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn required<'a>(header: &'a HashMap<String, String>, key: &str) -> Result<&'a str> {
    header
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::format(key, "missing required key"))
}

fn parse_scalar<T: std::str::FromStr>(header: &HashMap<String, String>, key: &str) -> Result<T> {
    let raw = required(header, key)?;
    raw.parse()
        .map_err(|_| Error::format(key, format!("cannot parse `{raw}`")))
}

fn parse_list<T: std::str::FromStr>(header: &HashMap<String, String>, key: &str) -> Result<Vec<T>> {
    let raw = required(header, key)?;
    raw.split_whitespace()
        .map(|tok| {
            tok.parse()
                .map_err(|_| Error::format(key, format!("cannot parse `{tok}`")))
        })
        .collect()
}

/// Companion raw file path for a header path: `foo.mhd` -> `foo.raw`.
pub fn raw_path_for(header: &Path) -> PathBuf {
    header.with_extension("raw")
}

/// Writes `volume` as `path` (header) plus a sibling `.raw` file.
///
/// Floating-point spacing is written in shortest round-trip form, so
/// reading the pair back reproduces the volume bit for bit.
pub fn write_metaimage<T: Element>(volume: &Volume<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw_path = raw_path_for(path);
    let raw_name = raw_path
        .file_name()
        .ok_or_else(|| Error::argument(format!("{} has no file name", path.display())))?
        .to_string_lossy()
        .into_owned();
    let meta = volume.meta();
    let join = |xs: Vec<String>| xs.join(" ");

    let header = format!(
        "ObjectType = Image\n\
         NDims = {}\n\
         BinaryData = True\n\
         BinaryDataByteOrderMSB = False\n\
         CompressedData = False\n\
         ElementSpacing = {}\n\
         DimSize = {}\n\
         ElementType = {}\n\
         ElementDataFile = {}\n",
        meta.ndims(),
        join(meta.spacing().iter().map(|s| s.to_string()).collect()),
        join(meta.dims().iter().map(|d| d.to_string()).collect()),
        T::TYPE.met_name(),
        raw_name,
    );

    let mut bytes = Vec::with_capacity(volume.len() * T::TYPE.byte_size());
    for &v in volume.data() {
        v.write_le(&mut bytes);
    }
    fs::write(&raw_path, &bytes).map_err(|e| Error::io(&raw_path, e))?;
    fs::write(path, header).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes an [`AnyVolume`] without the caller matching on its type.
pub fn write_any_metaimage(volume: &AnyVolume, path: impl AsRef<Path>) -> Result<()> {
    match volume {
        AnyVolume::U8(v) => write_metaimage(v, path),
        AnyVolume::U16(v) => write_metaimage(v, path),
        AnyVolume::U32(v) => write_metaimage(v, path),
        AnyVolume::F64(v) => write_metaimage(v, path),
    }
}

/// Extracts a 2D slice perpendicular to `axis` as row-major `(width, height, values)`.
///
/// The volume is treated as 3D with trailing extent-1 axes, so a 2D image is
/// slice 0 along axis 2.
pub fn extract_slice<T: Element>(
    volume: &Volume<T>,
    axis: usize,
    slice_index: usize,
) -> Result<(usize, usize, Vec<f64>)> {
    if axis > 2 {
        return Err(Error::argument(format!(
            "slice axis {axis} out of range 0..=2"
        )));
    }
    let dims = volume.meta().dims3();
    if slice_index >= dims[axis] {
        return Err(Error::argument(format!(
            "slice {slice_index} out of range for axis {axis} of extent {}",
            dims[axis]
        )));
    }
    let (u, v) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let (w, h) = (dims[u], dims[v]);
    let mut values = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            let mut c = [0; 3];
            c[axis] = slice_index;
            c[u] = col;
            c[v] = row;
            values.push(volume.at3(c).to_f64());
        }
    }
    Ok((w, h, values))
}

/// Writes one slice as an 8-bit binary PGM (P5).
///
/// With `normalize`, values are mapped linearly from the slice's `[min, max]`
/// onto `[0, 255]` (a constant slice maps to 0); otherwise values are rounded
/// and clamped to `[0, 255]`.
pub fn write_slice_pgm<T: Element>(
    volume: &Volume<T>,
    axis: usize,
    slice_index: usize,
    normalize: bool,
    path: impl AsRef<Path>,
) -> Result<()> {
    let (w, h, values) = extract_slice(volume, axis, slice_index)?;
    let pixels = to_gray8(&values, normalize);
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write!(file, "P5\n{w} {h}\n255\n").map_err(|e| Error::io(path, e))?;
    file.write_all(&pixels).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn to_gray8(values: &[f64], normalize: bool) -> Vec<u8> {
    if normalize {
        let (lo, hi) = values
            .iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let range = hi - lo;
        values
            .iter()
            .map(|&v| {
                if !(range > 0.0) || !v.is_finite() {
                    0
                } else {
                    ((v - lo) / range * 255.0).round().clamp(0.0, 255.0) as u8
                }
            })
            .collect()
    } else {
        values
            .iter()
            .map(|&v| {
                if v.is_nan() {
                    0
                } else {
                    v.round().clamp(0.0, 255.0) as u8
                }
            })
            .collect()
    }
}

/// Parses a binary PGM written by [`write_slice_pgm`]: `(width, height, pixels)`.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u8>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = || Error::argument(format!("{} is not a P5 PGM", path.display()));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad());
    }
    let w: usize = fields[1].parse().map_err(|_| bad())?;
    let h: usize = fields[2].parse().map_err(|_| bad())?;
    let pixels = bytes.get(pos..pos + w * h).ok_or_else(bad)?.to_vec();
    Ok((w, h, pixels))
}
