use image::imageops::{self, FilterType};
use image::{ImageBuffer, Rgb};

/// Interleaved 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

/// Per-channel normalisation used by CLIP-style vision encoders.
pub const CLIP_MEAN: [f32; 3] = [0.481_454_66, 0.457_827_5, 0.408_210_73];
pub const CLIP_STD: [f32; 3] = [0.268_629_54, 0.261_302_58, 0.275_777_11];

impl RgbFrame {
    pub fn solid(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        RgbFrame { width, height, data: rgb.iter().copied().cycle().take(width * height * 3).collect() }
    }

    fn to_image(&self) -> ImageBuffer<Rgb<u8>, Vec<u8>> {
        ImageBuffer::from_raw(self.width as u32, self.height as u32, self.data.clone()).expect("buffer matches dimensions")
    }

    pub fn mean_rgb(&self) -> [f32; 3] {
        let mut acc = [0f64; 3];
        for px in self.data.chunks_exact(3) {
            for c in 0..3 {
                acc[c] += px[c] as f64;
            }
        }
        let n = (self.width * self.height).max(1) as f64;
        acc.map(|v| (v / n) as f32)
    }

    /// Resizes the shorter side to `size`, centre-crops a `size` x `size` square and
    /// normalises to CHW floats.
    pub fn preprocess(&self, size: usize) -> Vec<f32> {
        let (w, h) = (self.width as f64, self.height as f64);
        let scale = size as f64 / w.min(h);
        let nw = ((w * scale).round() as u32).max(size as u32);
        let nh = ((h * scale).round() as u32).max(size as u32);
        let resized = imageops::resize(&self.to_image(), nw, nh, FilterType::Triangle);
        let x0 = (nw - size as u32) / 2;
        let y0 = (nh - size as u32) / 2;
        let mut out = vec![0f32; 3 * size * size];
        for y in 0..size {
            for x in 0..size {
                let px = resized.get_pixel(x0 + x as u32, y0 + y as u32);
                for c in 0..3 {
                    out[c * size * size + y * size + x] = (px[c] as f32 / 255.0 - CLIP_MEAN[c]) / CLIP_STD[c];
                }
            }
        }
        out
    }

    pub fn to_png(&self) -> crate::Result<Vec<u8>> {
        let mut buf = std::io::Cursor::new(Vec::new());
        self.to_image()
            .write_to(&mut buf, image::ImageFormat::Png)
            .map_err(|e| crate::Error::media(format!("png encode: {e}")))?;
        Ok(buf.into_inner())
    }
}
