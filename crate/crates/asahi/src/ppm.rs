//! Binary PPM (P6, maxval 255) reading and writing.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use asahi_core::raster::RasterError;
use asahi_core::Raster;

#[derive(Debug, thiserror::Error)]
pub enum PpmError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a binary PPM: {0}")]
    Header(String),
    #[error("only maxval 255 is supported, got {0}")]
    Maxval(u32),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

pub fn write_ppm<W: Write>(raster: &Raster, mut out: W) -> io::Result<()> {
    write!(out, "P6\n{} {}\n255\n", raster.width(), raster.height())?;
    out.write_all(raster.data())?;
    out.flush()
}

pub fn save_ppm(raster: &Raster, path: &Path) -> io::Result<()> {
    write_ppm(raster, BufWriter::new(File::create(path)?))
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn read_ppm<R: Read>(mut input: R) -> Result<Raster, PpmError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let magic = next_token(&bytes, &mut pos).unwrap_or_default();
    if magic != "P6" {
        return Err(PpmError::Header(format!("magic {magic:?}")));
    }
    let mut num = |what: &str| -> Result<u32, PpmError> {
        next_token(&bytes, &mut pos)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| PpmError::Header(format!("bad {what}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval != 255 {
        return Err(PpmError::Maxval(maxval));
    }
    // exactly one whitespace byte separates the header from the pixels
    let start = pos + 1;
    let need = width as usize * height as usize * 3;
    if bytes.len() < start + need {
        return Err(PpmError::Header(format!(
            "expected {need} pixel bytes, found {}",
            bytes.len().saturating_sub(start)
        )));
    }
    Ok(Raster::from_rgb(width, height, bytes[start..start + need].to_vec())?)
}

pub fn load_ppm(path: &Path) -> Result<Raster, PpmError> {
    read_ppm(BufReader::new(File::open(path)?))
}
