//! Dense row-major floating-point image storage.

use crate::scene::SceneError;

/// A `width × height × channels` image of `f64` samples stored row-major,
/// channel-interleaved.
///
/// Color channels hold linear-light values; disparity maps hold unbounded
/// reals. Range checks live in [`crate::scene::validate_scene`], not here.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    /// Zero-filled buffer.
    ///
    /// Panics when `channels` is not 1, 3 or 4.
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        assert!(
            matches!(channels, 1 | 3 | 4),
            "unsupported channel count {channels}"
        );
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, SceneError> {
        if !matches!(channels, 1 | 3 | 4) || data.len() != width * height * channels {
            return Err(SceneError::DimensionMismatch(format!(
                "buffer of {} samples cannot be {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds a buffer by evaluating `f(x, y, channel)` for every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut out = Self::new(width, height, channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    out.data[(y * width + x) * channels + c] = f(x, y, c);
                }
            }
        }
        out
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        self.data[(y * self.width + x) * self.channels + c] = value;
    }

    /// All channels of one pixel.
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn same_extent(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.same_extent(other) && self.channels == other.channels
    }

    /// Position of the first non-finite sample as `(x, y, channel)`.
    pub fn first_nonfinite(&self) -> Option<(usize, usize, usize)> {
        self.data.iter().position(|v| !v.is_finite()).map(|i| {
            let c = i % self.channels;
            let p = i / self.channels;
            (p % self.width, p / self.width, c)
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Extracts a single channel as a 1-channel buffer.
    pub fn channel(&self, c: usize) -> Self {
        assert!(c < self.channels);
        Self {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self
                .data
                .iter()
                .skip(c)
                .step_by(self.channels)
                .copied()
                .collect(),
        }
    }

    /// Left-right mirror.
    pub fn flip_horizontal(&self) -> Self {
        let w = self.width;
        Self::from_fn(w, self.height, self.channels, |x, y, c| {
            self.get(w - 1 - x, y, c)
        })
    }

    /// Swaps the x and y axes.
    pub fn transpose(&self) -> Self {
        Self::from_fn(self.height, self.width, self.channels, |x, y, c| {
            self.get(y, x, c)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(ImageBuffer::from_vec(2, 2, 3, vec![0.0; 12]).is_ok());
        assert!(matches!(
            ImageBuffer::from_vec(2, 2, 3, vec![0.0; 11]),
            Err(SceneError::DimensionMismatch(_))
        ));
        assert!(ImageBuffer::from_vec(1, 1, 2, vec![0.0; 2]).is_err());
    }

    #[test]
    fn indexing_is_row_major_interleaved() {
        let b = ImageBuffer::from_fn(3, 2, 3, |x, y, c| (100 * y + 10 * x + c) as f64);
        assert_eq!(b.get(2, 1, 1), 121.0);
        assert_eq!(b.pixel(1, 1), &[110.0, 111.0, 112.0]);
        assert_eq!(b.data()[(3 + 2) * 3], 120.0);
        assert_eq!(b.channel(2).get(2, 0, 0), 22.0);
    }

    #[test]
    fn nonfinite_location() {
        let mut b = ImageBuffer::new(4, 3, 1);
        assert_eq!(b.first_nonfinite(), None);
        b.set(2, 1, 0, f64::NAN);
        assert_eq!(b.first_nonfinite(), Some((2, 1, 0)));
    }

    #[test]
    fn flips_and_transposes() {
        let b = ImageBuffer::from_fn(3, 2, 1, |x, y, _| (x + 10 * y) as f64);
        assert_eq!(b.flip_horizontal().get(0, 1, 0), 12.0);
        let t = b.transpose();
        assert_eq!((t.width(), t.height()), (2, 3));
        assert_eq!(t.get(1, 2, 0), 12.0);
    }
}
