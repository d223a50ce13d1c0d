//! N-dimensional voxel grids.
//!
//! Every field in the pipeline (masks, distance maps, the gradient function,
//! label maps) is a [`Volume`] over the same [`VolumeMeta`]. Data is stored
//! x-fastest: `index = x + nx * (y + ny * z)`. One-, two- and
//! three-dimensional grids are supported; internally everything is treated as
//! 3D with trailing axes of extent 1.

use std::fmt;

use crate::error::{Error, Result};

/// Maximum supported dimensionality.
pub const MAX_DIMS: usize = 3;

/// Scalar element types with a fixed on-disk MetaImage representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementType {
    U8,
    U16,
    U32,
    F64,
}

impl ElementType {
    pub fn byte_size(self) -> usize {
        match self {
            ElementType::U8 => 1,
            ElementType::U16 => 2,
            ElementType::U32 => 4,
            ElementType::F64 => 8,
        }
    }

    pub fn met_name(self) -> &'static str {
        match self {
            ElementType::U8 => "MET_UCHAR",
            ElementType::U16 => "MET_USHORT",
            ElementType::U32 => "MET_UINT",
            ElementType::F64 => "MET_DOUBLE",
        }
    }

    pub fn from_met_name(name: &str) -> Option<Self> {
        match name {
            "MET_UCHAR" => Some(ElementType::U8),
            "MET_USHORT" => Some(ElementType::U16),
            "MET_UINT" => Some(ElementType::U32),
            "MET_DOUBLE" => Some(ElementType::F64),
            _ => None,
        }
    }
}

impl fmt::Display for ElementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.met_name())
    }
}

/// A voxel element that can live in a [`Volume`].
pub trait Element: Copy + Default + PartialEq + Send + Sync + fmt::Debug + 'static {
    const TYPE: ElementType;

    fn to_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    /// `bytes` has exactly `TYPE.byte_size()` entries.
    fn read_le(bytes: &[u8]) -> Self;
}

macro_rules! int_element {
    ($t:ty, $variant:ident) => {
        impl Element for $t {
            const TYPE: ElementType = ElementType::$variant;

            fn to_f64(self) -> f64 {
                self as f64
            }

            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            fn read_le(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes.try_into().expect("element width"))
            }
        }
    };
}

int_element!(u8, U8);
int_element!(u16, U16);
int_element!(u32, U32);

impl Element for f64 {
    const TYPE: ElementType = ElementType::F64;

    fn to_f64(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("element width"))
    }
}

/// Grid geometry: per-axis voxel counts and physical voxel spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeMeta {
    dims: Vec<usize>,
    spacing: Vec<f64>,
}

impl VolumeMeta {
    pub fn new(dims: &[usize], spacing: &[f64]) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_DIMS {
            return Err(Error::argument(format!(
                "volumes must have 1 to {MAX_DIMS} axes, got {}",
                dims.len()
            )));
        }
        if dims.len() != spacing.len() {
            return Err(Error::argument(format!(
                "{} dims but {} spacing values",
                dims.len(),
                spacing.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::argument(format!(
                "zero-length axis in dims {dims:?}"
            )));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::argument(format!(
                "spacing must be finite and positive, got {spacing:?}"
            )));
        }
        let total = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::argument(format!("voxel count of {dims:?} overflows")))?;
        // Labels and flood bookkeeping index voxels with u32.
        if total > u32::MAX as usize {
            return Err(Error::argument(format!(
                "voxel count {total} exceeds the supported maximum"
            )));
        }
        Ok(Self {
            dims: dims.to_vec(),
            spacing: spacing.to_vec(),
        })
    }

    /// Unit spacing on every axis.
    pub fn isotropic(dims: &[usize]) -> Result<Self> {
        Self::new(dims, &vec![1.0; dims.len()])
    }

    pub fn ndims(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Dims padded to three axes with extent 1.
    pub fn dims3(&self) -> [usize; 3] {
        let mut out = [1; 3];
        out[..self.dims.len()].copy_from_slice(&self.dims);
        out
    }

    /// Spacing padded to three axes with 1.0.
    pub fn spacing3(&self) -> [f64; 3] {
        let mut out = [1.0; 3];
        out[..self.spacing.len()].copy_from_slice(&self.spacing);
        out
    }

    /// Physical volume (area in 2D) of a single voxel.
    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn same_grid(&self, other: &VolumeMeta) -> bool {
        self == other
    }

    pub fn linear_index(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.dims.len() || idx.iter().zip(&self.dims).any(|(&i, &d)| i >= d) {
            return Err(Error::Bounds {
                index: idx.to_vec(),
                dims: self.dims.clone(),
            });
        }
        Ok(idx
            .iter()
            .zip(&self.dims)
            .rev()
            .fold(0, |acc, (&i, &d)| acc * d + i))
    }

    pub fn unlinearize(&self, linear: usize) -> Result<Vec<usize>> {
        if linear >= self.len() {
            return Err(Error::Bounds {
                index: vec![linear],
                dims: self.dims.clone(),
            });
        }
        let c = self.coords3(linear);
        Ok(c[..self.dims.len()].to_vec())
    }

    /// Unchecked 3D coordinates of a linear index.
    #[inline]
    pub fn coords3(&self, linear: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims3();
        [linear % nx, (linear / nx) % ny, linear / (nx * ny)]
    }

    /// Unchecked linear index of padded 3D coordinates.
    #[inline]
    pub fn index3(&self, c: [usize; 3]) -> usize {
        let [nx, ny, _] = self.dims3();
        c[0] + nx * (c[1] + ny * c[2])
    }

    /// True when the voxel lies on any face of the grid.
    pub fn on_border(&self, c: [usize; 3]) -> bool {
        self.dims
            .iter()
            .enumerate()
            .any(|(k, &d)| c[k] == 0 || c[k] == d - 1)
    }
}

/// A dense grid of scalar elements.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    meta: VolumeMeta,
    data: Vec<T>,
}

/// Real-valued distance map.
pub type DistanceField = Volume<f64>;
/// Gradient function values in `[0, 1]`.
pub type GradientField = Volume<f64>;
/// Region labels; 0 is reserved for watershed lines / unlabeled voxels.
pub type LabelVolume = Volume<u32>;

impl<T: Element> Volume<T> {
    pub fn filled(meta: VolumeMeta, value: T) -> Self {
        let data = vec![value; meta.len()];
        Self { meta, data }
    }

    pub fn zeros(meta: VolumeMeta) -> Self {
        Self::filled(meta, T::default())
    }

    pub fn from_vec(meta: VolumeMeta, data: Vec<T>) -> Result<Self> {
        if data.len() != meta.len() {
            return Err(Error::argument(format!(
                "buffer of {} elements does not match dims {:?}",
                data.len(),
                meta.dims()
            )));
        }
        Ok(Self { meta, data })
    }

    /// Builds a volume by evaluating `f` at every voxel's padded 3D coordinates.
    pub fn from_fn(meta: VolumeMeta, mut f: impl FnMut([usize; 3]) -> T) -> Self {
        let data = (0..meta.len()).map(|i| f(meta.coords3(i))).collect();
        Self { meta, data }
    }

    pub fn meta(&self) -> &VolumeMeta {
        &self.meta
    }

    pub fn element_type(&self) -> ElementType {
        T::TYPE
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, idx: &[usize]) -> Result<T> {
        Ok(self.data[self.meta.linear_index(idx)?])
    }

    pub fn set(&mut self, idx: &[usize], value: T) -> Result<()> {
        let i = self.meta.linear_index(idx)?;
        self.data[i] = value;
        Ok(())
    }

    #[inline]
    pub fn at3(&self, c: [usize; 3]) -> T {
        self.data[self.meta.index3(c)]
    }

    pub fn map<U: Element>(&self, f: impl Fn(T) -> U) -> Volume<U> {
        Volume {
            meta: self.meta.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Same data on a grid with different spacing.
    pub fn with_spacing(mut self, spacing: &[f64]) -> Result<Self> {
        self.meta = VolumeMeta::new(self.meta.dims(), spacing)?;
        Ok(self)
    }

    pub fn to_f64(&self) -> Volume<f64> {
        self.map(Element::to_f64)
    }
}

/// Foreground value of a [`BinaryMask`].
pub const FOREGROUND: u8 = 255;

/// A U8 volume whose voxels are exactly 0 (background) or 255 (foreground).
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask(Volume<u8>);

impl BinaryMask {
    pub fn empty(meta: VolumeMeta) -> Self {
        Self(Volume::zeros(meta))
    }

    /// Validates that every element is 0 or 255.
    pub fn from_volume(volume: Volume<u8>) -> Result<Self> {
        if let Some(pos) = volume
            .data()
            .iter()
            .position(|&v| v != 0 && v != FOREGROUND)
        {
            return Err(Error::argument(format!(
                "binary mask value {} at linear index {pos}; expected 0 or 255",
                volume.data()[pos]
            )));
        }
        Ok(Self(volume))
    }

    /// Any nonzero element becomes foreground.
    pub fn from_nonzero<T: Element>(volume: &Volume<T>) -> Self {
        Self(volume.map(|v| if v == T::default() { 0 } else { FOREGROUND }))
    }

    pub fn from_bools(meta: VolumeMeta, bits: &[bool]) -> Result<Self> {
        let data = bits
            .iter()
            .map(|&b| if b { FOREGROUND } else { 0 })
            .collect();
        Ok(Self(Volume::from_vec(meta, data)?))
    }

    pub fn from_fn(meta: VolumeMeta, mut f: impl FnMut([usize; 3]) -> bool) -> Self {
        Self(Volume::from_fn(meta, |c| if f(c) { FOREGROUND } else { 0 }))
    }

    pub fn meta(&self) -> &VolumeMeta {
        self.0.meta()
    }

    pub fn volume(&self) -> &Volume<u8> {
        &self.0
    }

    pub fn into_volume(self) -> Volume<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn is_set(&self, linear: usize) -> bool {
        self.0.data()[linear] != 0
    }

    pub fn set(&mut self, linear: usize, on: bool) {
        self.0.data_mut()[linear] = if on { FOREGROUND } else { 0 };
    }

    pub fn count(&self) -> usize {
        self.0.data().iter().filter(|&&v| v != 0).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.data().iter().map(|&v| v != 0)
    }

    /// Linear indices of foreground voxels in raster order.
    pub fn foreground(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .data()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, _)| i)
    }

    pub fn complement(&self) -> Self {
        Self(self.0.map(|v| if v == 0 { FOREGROUND } else { 0 }))
    }

    pub fn union(&self, other: &BinaryMask) -> Result<Self> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<Self> {
        self.zip_with(other, |a, b| a && b)
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<Self> {
        if !self.meta().same_grid(other.meta()) {
            return Err(Error::argument("mask grids differ"));
        }
        let bits: Vec<bool> = self
            .iter()
            .zip(other.iter())
            .map(|(a, b)| f(a, b))
            .collect();
        Self::from_bools(self.meta().clone(), &bits)
    }
}

/// A volume of runtime-determined element type, as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyVolume {
    U8(Volume<u8>),
    U16(Volume<u16>),
    U32(Volume<u32>),
    F64(Volume<f64>),
}

impl AnyVolume {
    pub fn meta(&self) -> &VolumeMeta {
        match self {
            AnyVolume::U8(v) => v.meta(),
            AnyVolume::U16(v) => v.meta(),
            AnyVolume::U32(v) => v.meta(),
            AnyVolume::F64(v) => v.meta(),
        }
    }

    pub fn element_type(&self) -> ElementType {
        match self {
            AnyVolume::U8(_) => ElementType::U8,
            AnyVolume::U16(_) => ElementType::U16,
            AnyVolume::U32(_) => ElementType::U32,
            AnyVolume::F64(_) => ElementType::F64,
        }
    }

    pub fn to_f64(&self) -> Volume<f64> {
        match self {
            AnyVolume::U8(v) => v.to_f64(),
            AnyVolume::U16(v) => v.to_f64(),
            AnyVolume::U32(v) => v.to_f64(),
            AnyVolume::F64(v) => v.clone(),
        }
    }

    /// Nonzero voxels as foreground.
    pub fn to_mask(&self) -> BinaryMask {
        match self {
            AnyVolume::U8(v) => BinaryMask::from_nonzero(v),
            AnyVolume::U16(v) => BinaryMask::from_nonzero(v),
            AnyVolume::U32(v) => BinaryMask::from_nonzero(v),
            AnyVolume::F64(v) => BinaryMask::from_nonzero(v),
        }
    }

    /// Integer label volume; fails on fractional, negative or oversized values.
    pub fn to_labels(&self) -> Result<LabelVolume> {
        match self {
            AnyVolume::U8(v) => Ok(v.map(u32::from)),
            AnyVolume::U16(v) => Ok(v.map(u32::from)),
            AnyVolume::U32(v) => Ok(v.clone()),
            AnyVolume::F64(v) => {
                if let Some(bad) = v
                    .data()
                    .iter()
                    .find(|&&x| !(x >= 0.0 && x <= u32::MAX as f64 && x.fract() == 0.0))
                {
                    return Err(Error::argument(format!("{bad} is not a valid label")));
                }
                Ok(v.map(|x| x as u32))
            }
        }
    }
}

macro_rules! any_from {
    ($t:ty, $variant:ident) => {
        impl From<Volume<$t>> for AnyVolume {
            fn from(v: Volume<$t>) -> Self {
                AnyVolume::$variant(v)
            }
        }
    };
}

any_from!(u8, U8);
any_from!(u16, U16);
any_from!(u32, U32);
any_from!(f64, F64);
