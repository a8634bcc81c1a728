//! 8-bit image buffer shared by the attack engine and the I/O codecs.

use crate::error::{Error, Result};

/// An 8-bit image: grayscale (1 channel) or RGB (3 channels),
/// row-major and channel-interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    channels: u8,
    pixels: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, channels: u8, pixels: Vec<u8>) -> Result<ImageBuffer> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "images must have 1 or 3 channels, got {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if pixels.len() != expected {
            return Err(Error::invalid(format!(
                "pixel count {} does not match {width}x{height}x{channels}",
                pixels.len()
            )));
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            pixels,
        })
    }

    /// Solid-color image, handy for tests and synthetic data.
    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<ImageBuffer> {
        let len = width as usize * height as usize * channels as usize;
        ImageBuffer::new(width, height, channels, vec![value; len])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    /// Sample at column `x`, row `y`, channel `c`.
    pub fn get(&self, x: u32, y: u32, c: u8) -> u8 {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        self.pixels[self.sample_index(x, y, c)]
    }

    pub(crate) fn sample_index(&self, x: u32, y: u32, c: u8) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize + c as usize
    }

    /// Mean over every intensity sample, all channels pooled.
    pub fn mean_intensity(&self) -> f64 {
        let sum: u64 = self.pixels.iter().map(|&p| p as u64).sum();
        sum as f64 / self.pixels.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_construction() {
        assert!(ImageBuffer::new(0, 4, 3, vec![]).is_err());
        assert!(ImageBuffer::new(2, 2, 2, vec![0; 8]).is_err());
        assert!(ImageBuffer::new(2, 2, 3, vec![0; 11]).is_err());
        let img = ImageBuffer::new(2, 2, 3, vec![0; 12]).unwrap();
        assert_eq!(img.channels(), 3);
    }

    #[test]
    fn indexing_is_row_major_interleaved() {
        let pixels: Vec<u8> = (0..12).collect();
        let img = ImageBuffer::new(2, 2, 3, pixels).unwrap();
        assert_eq!(img.get(0, 0, 0), 0);
        assert_eq!(img.get(1, 0, 2), 5);
        assert_eq!(img.get(0, 1, 1), 7);
        assert_eq!(img.get(1, 1, 2), 11);
    }

    #[test]
    fn mean_pools_all_channels() {
        let img = ImageBuffer::new(2, 1, 3, vec![0, 0, 0, 255, 255, 255]).unwrap();
        assert_eq!(img.mean_intensity(), 127.5);
    }
}
