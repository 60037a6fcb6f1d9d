use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::time::Stamp;

/// Raw image message as it travels on an image topic: open encoding string,
/// row stride, and the pixel buffer. This is the on-wire form; the node
/// normalizes it into [`RasterImage`] before any processing.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub stamp: Stamp,
    pub frame_id: String,
    pub width: u32,
    pub height: u32,
    pub encoding: String,
    pub step: u32,
    pub data: Vec<u8>,
}

impl rograph::Message for Image {
    fn type_name() -> &'static str {
        "sensor_msgs/msg/Image"
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("pixel buffer holds {actual} bytes, expected {expected} for {width}x{height} {format:?}")]
    LengthMismatch {
        width: u32,
        height: u32,
        format: PixelFormat,
        expected: usize,
        actual: usize,
    },
    #[error("image has zero area ({width}x{height})")]
    ZeroArea { width: u32, height: u32 },
}

/// Normalized in-memory pixel layout. Color data is always stored RGB.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelFormat {
    Rgb8,
    Mono8,
}

impl PixelFormat {
    pub fn channels(&self) -> u32 {
        match self {
            PixelFormat::Rgb8 => 3,
            PixelFormat::Mono8 => 1,
        }
    }
}

/// Wire encoding the image arrived with; kept so the original byte order can
/// be restored when converting back out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceEncoding {
    Rgb8,
    Bgr8,
    Mono8,
}

impl SourceEncoding {
    pub fn wire_name(&self) -> &'static str {
        match self {
            SourceEncoding::Rgb8 => "rgb8",
            SourceEncoding::Bgr8 => "bgr8",
            SourceEncoding::Mono8 => "mono8",
        }
    }
}

/// Middleware-neutral image: dimensions, normalized pixels, and the capture
/// timestamp. `bgr8` input is stored with channels swapped to RGB; the
/// original order is recorded in `source` and restored by [`Self::wire_bytes`].
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    format: PixelFormat,
    source: SourceEncoding,
    data: Vec<u8>,
    stamp: Stamp,
}

impl RasterImage {
    pub fn rgb8(width: u32, height: u32, data: Vec<u8>, stamp: Stamp) -> Result<Self, ImageError> {
        Self::checked(width, height, PixelFormat::Rgb8, SourceEncoding::Rgb8, data, stamp)
    }

    /// Accepts a BGR buffer and stores it as RGB.
    pub fn bgr8(width: u32, height: u32, mut data: Vec<u8>, stamp: Stamp) -> Result<Self, ImageError> {
        swap_rb(&mut data);
        Self::checked(width, height, PixelFormat::Rgb8, SourceEncoding::Bgr8, data, stamp)
    }

    pub fn mono8(width: u32, height: u32, data: Vec<u8>, stamp: Stamp) -> Result<Self, ImageError> {
        Self::checked(width, height, PixelFormat::Mono8, SourceEncoding::Mono8, data, stamp)
    }

    fn checked(
        width: u32,
        height: u32,
        format: PixelFormat,
        source: SourceEncoding,
        data: Vec<u8>,
        stamp: Stamp,
    ) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroArea { width, height });
        }
        let expected = width as usize * height as usize * format.channels() as usize;
        if data.len() != expected {
            return Err(ImageError::LengthMismatch {
                width,
                height,
                format,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            format,
            source,
            data,
            stamp,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn format(&self) -> PixelFormat {
        self.format
    }

    pub fn source_encoding(&self) -> SourceEncoding {
        self.source
    }

    /// Normalized pixel bytes (RGB or mono row-major, no padding).
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn stamp(&self) -> Stamp {
        self.stamp
    }

    pub fn set_stamp(&mut self, stamp: Stamp) {
        self.stamp = stamp;
    }

    /// Pixel bytes re-ordered back to the source encoding.
    pub fn wire_bytes(&self) -> Vec<u8> {
        let mut out = self.data.clone();
        if self.source == SourceEncoding::Bgr8 {
            swap_rb(&mut out);
        }
        out
    }

    /// Builds a copy with the same metadata but a replacement pixel buffer.
    pub fn with_data(&self, data: Vec<u8>) -> Result<Self, ImageError> {
        Self::checked(self.width, self.height, self.format, self.source, data, self.stamp)
    }

    /// SHA-256 of the normalized pixel buffer, lowercase hex.
    pub fn checksum_hex(&self) -> String {
        let digest = Sha256::digest(&self.data);
        let mut s = String::with_capacity(64);
        for b in digest {
            use std::fmt::Write;
            let _ = write!(s, "{b:02x}");
        }
        s
    }
}

fn swap_rb(data: &mut [u8]) {
    for px in data.chunks_exact_mut(3) {
        px.swap(0, 2);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bgr_is_normalized_and_restored() {
        let bgr = vec![1u8, 2, 3, 4, 5, 6];
        let img = RasterImage::bgr8(2, 1, bgr.clone(), Stamp::zero()).unwrap();
        assert_eq!(img.data(), &[3, 2, 1, 6, 5, 4]);
        assert_eq!(img.wire_bytes(), bgr);
        assert_eq!(img.source_encoding().wire_name(), "bgr8");
    }

    #[test]
    fn length_is_validated() {
        let err = RasterImage::rgb8(2, 2, vec![0; 11], Stamp::zero()).unwrap_err();
        assert!(matches!(err, ImageError::LengthMismatch { expected: 12, actual: 11, .. }));
        assert!(RasterImage::mono8(0, 4, vec![], Stamp::zero()).is_err());
    }

    #[test]
    fn checksum_is_stable() {
        let a = RasterImage::rgb8(1, 1, vec![9, 9, 9], Stamp::zero()).unwrap();
        let b = RasterImage::rgb8(1, 1, vec![9, 9, 9], Stamp::now()).unwrap();
        assert_eq!(a.checksum_hex(), b.checksum_hex());
        assert_eq!(a.checksum_hex().len(), 64);
    }
}
