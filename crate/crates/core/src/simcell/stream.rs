//! Binary depth stream: `DSTR`, then little-endian u32 width, height and
//! frame count, then every frame as row-major little-endian f32 meters.

use std::io::{self, Read, Seek, SeekFrom, Write};

use thiserror::Error;

use crate::geometry::DepthImage;

pub const STREAM_MAGIC: [u8; 4] = *b"DSTR";
const HEADER_LEN: u64 = 16;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a depth stream (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("corrupt header: {0}")]
    BadHeader(String),
    #[error("stream truncated after {got} of {expected} frames")]
    Truncated { expected: u32, got: u32 },
    #[error("frame is {got:?}, stream is {expected:?}")]
    FrameSize { expected: (u32, u32), got: (u32, u32) },
    #[error("invalid depth in frame {frame}: {detail}")]
    BadFrame { frame: u32, detail: String },
}

pub struct DepthStreamWriter<W: Write + Seek> {
    out: W,
    width: u32,
    height: u32,
    frames: u32,
    buf: Vec<u8>,
}

impl<W: Write + Seek> DepthStreamWriter<W> {
    pub fn new(mut out: W, width: u32, height: u32) -> Result<Self, StreamError> {
        out.write_all(&STREAM_MAGIC)?;
        out.write_all(&width.to_le_bytes())?;
        out.write_all(&height.to_le_bytes())?;
        out.write_all(&0u32.to_le_bytes())?;
        Ok(Self {
            out,
            width,
            height,
            frames: 0,
            buf: Vec::with_capacity(width as usize * height as usize * 4),
        })
    }

    pub fn frames_written(&self) -> u32 {
        self.frames
    }

    pub fn write_frame(&mut self, frame: &DepthImage) -> Result<(), StreamError> {
        if (frame.width(), frame.height()) != (self.width, self.height) {
            return Err(StreamError::FrameSize {
                expected: (self.width, self.height),
                got: (frame.width(), frame.height()),
            });
        }
        self.buf.clear();
        for d in frame.as_slice() {
            self.buf.extend_from_slice(&d.to_le_bytes());
        }
        self.out.write_all(&self.buf)?;
        self.frames += 1;
        Ok(())
    }

    /// Writes the final frame count into the header.
    pub fn finish(mut self) -> Result<W, StreamError> {
        let end = self.out.stream_position()?;
        self.out.seek(SeekFrom::Start(12))?;
        self.out.write_all(&self.frames.to_le_bytes())?;
        self.out.seek(SeekFrom::Start(end))?;
        self.out.flush()?;
        Ok(self.out)
    }
}

pub struct DepthStreamReader<R: Read> {
    input: R,
    width: u32,
    height: u32,
    count: u32,
    read: u32,
    buf: Vec<u8>,
}

impl<R: Read> DepthStreamReader<R> {
    pub fn new(mut input: R) -> Result<Self, StreamError> {
        let mut header = [0u8; HEADER_LEN as usize];
        input.read_exact(&mut header).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => StreamError::BadHeader("shorter than the header".into()),
            _ => StreamError::Io(e),
        })?;
        let magic: [u8; 4] = header[0..4].try_into().expect("4 bytes");
        if magic != STREAM_MAGIC {
            return Err(StreamError::BadMagic(magic));
        }
        let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().expect("4 bytes"));
        let (width, height, count) = (word(4), word(8), word(12));
        if width == 0 || height == 0 {
            return Err(StreamError::BadHeader(format!("{width}x{height} frames")));
        }
        Ok(Self {
            input,
            width,
            height,
            count,
            read: 0,
            buf: vec![0; width as usize * height as usize * 4],
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn frame_count(&self) -> u32 {
        self.count
    }

    /// Next frame, `None` after the last one announced in the header.
    pub fn next_frame(&mut self) -> Option<Result<DepthImage, StreamError>> {
        if self.read >= self.count {
            return None;
        }
        if let Err(e) = self.input.read_exact(&mut self.buf) {
            let err = match e.kind() {
                io::ErrorKind::UnexpectedEof => StreamError::Truncated {
                    expected: self.count,
                    got: self.read,
                },
                _ => StreamError::Io(e),
            };
            self.read = self.count;
            return Some(Err(err));
        }
        let depth = self
            .buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let index = self.read;
        self.read += 1;
        Some(
            DepthImage::from_vec(self.width, self.height, depth, u64::from(index)).map_err(|e| StreamError::BadFrame {
                frame: index,
                detail: e.to_string(),
            }),
        )
    }
}

impl<R: Read> Iterator for DepthStreamReader<R> {
    type Item = Result<DepthImage, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame()
    }
}
