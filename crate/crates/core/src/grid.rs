//! Dense row-major 2D and 3D grids.

use crate::error::{Error, Result};

/// Row-major 2D grid; `data[row * width + col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Real-valued image.
pub type Image = Grid2<f64>;
/// Binary image.
pub type Mask = Grid2<bool>;

impl<T: Clone> Grid2<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid2<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::validation(format!(
                "grid {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.width + col]
    }

    #[inline]
    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut T {
        &mut self.data[row * self.width + col]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid2<U> {
        Grid2 {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_dims<U>(&self, other: &Grid2<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn ensure_same_dims<U>(&self, other: &Grid2<U>, what: &str) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "{what}: dimension mismatch {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// 0.0 / 1.0 image of the mask.
    pub fn to_image(&self) -> Image {
        self.map(|&b| if b { 1.0 } else { 0.0 })
    }
}

/// Row-major 3D grid with x fastest: `data[(z * ny + y) * nx + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3<T> {
    dims: [usize; 3],
    data: Vec<T>,
}

impl<T: Clone> Grid3<T> {
    pub fn filled(dims: [usize; 3], value: T) -> Self {
        Self {
            dims,
            data: vec![value; dims[0] * dims[1] * dims[2]],
        }
    }
}

impl<T> Grid3<T> {
    pub fn from_vec(dims: [usize; 3], data: Vec<T>) -> Result<Self> {
        if data.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::validation(format!(
                "grid {dims:?} needs {} values, got {}",
                dims[0] * dims[1] * dims[2],
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> &T {
        &self.data[self.index(x, y, z)]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize, z: usize) -> &mut T {
        let i = self.index(x, y, z);
        &mut self.data[i]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid2_indexing_is_row_major() {
        let g = Grid2::from_fn(3, 2, |r, c| r * 10 + c);
        assert_eq!(g.as_slice(), &[0, 1, 2, 10, 11, 12]);
        assert_eq!(*g.get(1, 2), 12);
    }

    #[test]
    fn grid2_rejects_wrong_length() {
        assert!(Grid2::from_vec(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn grid3_x_fastest() {
        let g = Grid3::from_vec([2, 3, 4], (0..24).collect()).unwrap();
        assert_eq!(*g.get(1, 0, 0), 1);
        assert_eq!(*g.get(0, 1, 0), 2);
        assert_eq!(*g.get(0, 0, 1), 6);
    }
}
