//! PNG encode/decode for RGB8 buffers.

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};

pub fn encode_png_rgb(width: u32, height: u32, rgb: &[u8]) -> Result<Vec<u8>, image::ImageError> {
    let mut out = Vec::new();
    PngEncoder::new(&mut out).write_image(rgb, width, height, ExtendedColorType::Rgb8)?;
    Ok(out)
}

/// Decodes any PNG into (width, height, RGB8 pixels).
pub fn decode_png_rgb(bytes: &[u8]) -> Result<(u32, u32, Vec<u8>), image::ImageError> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?.to_rgb8();
    Ok((img.width(), img.height(), img.into_raw()))
}
