//! YUV4MPEG2 (`.y4m`) reading and writing.
//!
//! Frames are located by scanning the stream once, so random access to any frame is a
//! seek. Raw frame payloads can be copied between files without re-encoding.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::frame::RgbFrame;
use crate::error::{Error, Result};

const MAGIC: &str = "YUV4MPEG2";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chroma {
    C420,
    C422,
    C444,
    Mono,
}

impl Chroma {
    fn parse(tag: &str) -> Result<Self> {
        match tag {
            t if t.starts_with("420") => Ok(Chroma::C420),
            "422" => Ok(Chroma::C422),
            "444" => Ok(Chroma::C444),
            "mono" => Ok(Chroma::Mono),
            other => Err(Error::media(format!("unsupported y4m colourspace C{other}"))),
        }
    }

    fn chroma_dims(self, w: usize, h: usize) -> (usize, usize) {
        match self {
            Chroma::C420 => (w.div_ceil(2), h.div_ceil(2)),
            Chroma::C422 => (w.div_ceil(2), h),
            Chroma::C444 => (w, h),
            Chroma::Mono => (0, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Y4mHeader {
    pub width: usize,
    pub height: usize,
    pub fps_num: u32,
    pub fps_den: u32,
    pub chroma: Chroma,
    /// The header line as read (without the trailing newline); reused verbatim when
    /// writing sub-clips.
    pub raw: String,
}

impl Y4mHeader {
    pub fn new(width: usize, height: usize, fps_num: u32, fps_den: u32) -> Self {
        let raw = format!("{MAGIC} W{width} H{height} F{fps_num}:{fps_den} Ip A1:1 C444");
        Y4mHeader { width, height, fps_num, fps_den, chroma: Chroma::C444, raw }
    }

    pub fn parse(line: &str) -> Result<Self> {
        let mut tokens = line.split_ascii_whitespace();
        if tokens.next() != Some(MAGIC) {
            return Err(Error::media("not a YUV4MPEG2 stream"));
        }
        let (mut width, mut height, mut fps, mut chroma) = (None, None, None, Chroma::C420);
        for tok in tokens {
            let (tag, val) = tok.split_at(1);
            match tag {
                "W" => width = val.parse().ok(),
                "H" => height = val.parse().ok(),
                "F" => {
                    fps = val
                        .split_once(':')
                        .and_then(|(n, d)| Some((n.parse::<u32>().ok()?, d.parse::<u32>().ok()?)))
                }
                "C" => chroma = Chroma::parse(val)?,
                _ => {}
            }
        }
        let (width, height) = width
            .zip(height)
            .filter(|(w, h)| *w > 0 && *h > 0)
            .ok_or_else(|| Error::media("y4m header lacks frame size"))?;
        let (fps_num, fps_den) = fps.filter(|(n, d)| *n > 0 && *d > 0).unwrap_or((30, 1));
        Ok(Y4mHeader { width, height, fps_num, fps_den, chroma, raw: line.to_string() })
    }

    pub fn fps(&self) -> f64 {
        self.fps_num as f64 / self.fps_den as f64
    }

    pub fn frame_len(&self) -> usize {
        let (cw, ch) = self.chroma.chroma_dims(self.width, self.height);
        self.width * self.height + 2 * cw * ch
    }
}

/// Random-access reader over a `.y4m` file.
pub struct Y4mReader {
    path: PathBuf,
    reader: BufReader<File>,
    header: Y4mHeader,
    offsets: Vec<u64>,
}

impl Y4mReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(Error::at(&path))?;
        let mut reader = BufReader::new(file);
        let mut line = String::new();
        reader.read_line(&mut line).map_err(|e| Error::media(format!("{}: {e}", path.display())))?;
        if !line.ends_with('\n') {
            return Err(Error::media(format!("{}: truncated y4m header", path.display())));
        }
        let header = Y4mHeader::parse(line.trim_end())?;
        let frame_len = header.frame_len() as u64;
        let total = reader.get_ref().metadata()?.len();
        let mut pos = line.len() as u64;
        let mut offsets = Vec::new();
        let mut frame_line = Vec::new();
        while pos < total {
            frame_line.clear();
            let n = reader.read_until(b'\n', &mut frame_line)?;
            if !frame_line.starts_with(b"FRAME") || !frame_line.ends_with(b"\n") {
                return Err(Error::media(format!("{}: bad frame marker at byte {pos}", path.display())));
            }
            let data = pos + n as u64;
            if data + frame_len > total {
                return Err(Error::media(format!("{}: truncated frame {}", path.display(), offsets.len())));
            }
            offsets.push(data);
            pos = data + frame_len;
            reader.seek(SeekFrom::Start(pos))?;
        }
        Ok(Y4mReader { path, reader, header, offsets })
    }

    pub fn header(&self) -> &Y4mHeader {
        &self.header
    }

    pub fn frame_count(&self) -> usize {
        self.offsets.len()
    }

    pub fn fps(&self) -> f64 {
        self.header.fps()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn read_raw(&mut self, index: usize) -> Result<Vec<u8>> {
        let offset = *self.offsets.get(index).ok_or_else(|| {
            Error::media(format!("{}: frame {index} beyond {} frames", self.path.display(), self.offsets.len()))
        })?;
        self.reader.seek(SeekFrom::Start(offset))?;
        let mut buf = vec![0u8; self.header.frame_len()];
        self.reader.read_exact(&mut buf)?;
        Ok(buf)
    }

    pub fn read_rgb(&mut self, index: usize) -> Result<RgbFrame> {
        let raw = self.read_raw(index)?;
        Ok(yuv_to_rgb(&self.header, &raw))
    }
}

pub struct Y4mWriter {
    out: BufWriter<File>,
    header: Y4mHeader,
    frames: usize,
}

impl Y4mWriter {
    pub fn create(path: impl AsRef<Path>, header: &Y4mHeader) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(Error::at(path))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{}", header.raw)?;
        Ok(Y4mWriter { out, header: header.clone(), frames: 0 })
    }

    pub fn write_raw(&mut self, data: &[u8]) -> Result<()> {
        if data.len() != self.header.frame_len() {
            return Err(Error::media(format!(
                "frame payload {} bytes, expected {}",
                data.len(),
                self.header.frame_len()
            )));
        }
        self.out.write_all(b"FRAME\n")?;
        self.out.write_all(data)?;
        self.frames += 1;
        Ok(())
    }

    pub fn write_rgb(&mut self, frame: &RgbFrame) -> Result<()> {
        if self.header.chroma != Chroma::C444 {
            return Err(Error::media("RGB frames can only be written to C444 streams"));
        }
        if (frame.width, frame.height) != (self.header.width, self.header.height) {
            return Err(Error::media("frame size does not match stream header"));
        }
        let data = rgb_to_yuv444(frame);
        self.write_raw(&data)
    }

    pub fn finish(mut self) -> Result<usize> {
        self.out.flush()?;
        Ok(self.frames)
    }
}

fn clamp_u8(v: f32) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// BT.601 limited-range conversion.
fn yuv_to_rgb(header: &Y4mHeader, raw: &[u8]) -> RgbFrame {
    let (w, h) = (header.width, header.height);
    let (cw, ch) = header.chroma.chroma_dims(w, h);
    let y_plane = &raw[..w * h];
    let (u_plane, v_plane) = if header.chroma == Chroma::Mono {
        (&[][..], &[][..])
    } else {
        (&raw[w * h..w * h + cw * ch], &raw[w * h + cw * ch..])
    };
    let mut data = Vec::with_capacity(w * h * 3);
    for row in 0..h {
        for col in 0..w {
            let y = y_plane[row * w + col] as f32;
            let (u, v) = if header.chroma == Chroma::Mono {
                (128.0, 128.0)
            } else {
                let cr = row * ch / h;
                let cc = col * cw / w;
                (u_plane[cr * cw + cc] as f32, v_plane[cr * cw + cc] as f32)
            };
            let c = 1.164 * (y - 16.0);
            let (d, e) = (u - 128.0, v - 128.0);
            data.push(clamp_u8(c + 1.596 * e));
            data.push(clamp_u8(c - 0.392 * d - 0.813 * e));
            data.push(clamp_u8(c + 2.017 * d));
        }
    }
    RgbFrame { width: w, height: h, data }
}

fn rgb_to_yuv444(frame: &RgbFrame) -> Vec<u8> {
    let n = frame.width * frame.height;
    let mut out = vec![0u8; 3 * n];
    for (i, px) in frame.data.chunks_exact(3).enumerate() {
        let (r, g, b) = (px[0] as f32, px[1] as f32, px[2] as f32);
        out[i] = clamp_u8(16.0 + 0.257 * r + 0.504 * g + 0.098 * b);
        out[n + i] = clamp_u8(128.0 - 0.148 * r - 0.291 * g + 0.439 * b);
        out[2 * n + i] = clamp_u8(128.0 + 0.439 * r - 0.368 * g - 0.071 * b);
    }
    out
}

/// Writes frames `[start, end]` of `reader` to `path`, copying payloads unchanged.
pub fn copy_frame_range(reader: &mut Y4mReader, start: usize, end: usize, path: impl AsRef<Path>) -> Result<usize> {
    if start > end || end >= reader.frame_count() {
        return Err(Error::media(format!(
            "frame range [{start}, {end}] outside video of {} frames",
            reader.frame_count()
        )));
    }
    let header = reader.header().clone();
    let mut writer = Y4mWriter::create(path, &header)?;
    for i in start..=end {
        let raw = reader.read_raw(i)?;
        writer.write_raw(&raw)?;
    }
    writer.finish()
}
