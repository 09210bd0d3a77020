//! MVOL on-disk format: a JSON header `<stem>.json` next to a raw
//! little-endian x-fastest payload `<stem>.raw` (or gzip'd `<stem>.raw.gz`).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};

use super::{Dims, Intensity, Mask3, Spacing, Volume3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    U8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvolHeader {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub dtype: Dtype,
    pub order: String,
    pub byte_order: String,
    /// Extension key; absent means raw Hounsfield units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity: Option<Intensity>,
}

impl MvolHeader {
    fn new(dims: Dims, spacing: Spacing, dtype: Dtype) -> Self {
        MvolHeader {
            dims: dims.0,
            spacing: spacing.0,
            dtype,
            order: "x-fastest".into(),
            byte_order: "little-endian".into(),
            intensity: None,
        }
    }

    fn check(&self, want: Dtype) -> Result<()> {
        if self.dtype != want {
            return Err(Error::Format(format!(
                "expected dtype {want:?}, found {:?}",
                self.dtype
            )));
        }
        if self.order != "x-fastest" {
            return Err(Error::Format(format!("unsupported order {:?}", self.order)));
        }
        if self.byte_order != "little-endian" {
            return Err(Error::Format(format!(
                "unsupported byte order {:?}",
                self.byte_order
            )));
        }
        Ok(())
    }
}

pub fn header_path(stem: &Path) -> PathBuf {
    with_suffix(stem, ".json")
}

pub fn payload_path(stem: &Path) -> PathBuf {
    with_suffix(stem, ".raw")
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_header(stem: &Path, h: &MvolHeader) -> Result<()> {
    let mut text = serde_json::to_string_pretty(h)?;
    text.push('\n');
    std::fs::write(header_path(stem), text)?;
    Ok(())
}

fn read_header(stem: &Path) -> Result<MvolHeader> {
    let path = header_path(stem);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn read_payload(stem: &Path) -> Result<Vec<u8>> {
    let raw = payload_path(stem);
    let mut buf = Vec::new();
    if raw.exists() {
        BufReader::new(File::open(&raw)?).read_to_end(&mut buf)?;
    } else {
        let gz = with_suffix(stem, ".raw.gz");
        let f = File::open(&gz)
            .map_err(|e| Error::from(e).context(format!("no payload for {}", stem.display())))?;
        GzDecoder::new(BufReader::new(f)).read_to_end(&mut buf)?;
    }
    Ok(buf)
}

pub fn write_volume(stem: &Path, v: &Volume3) -> Result<()> {
    let mut h = MvolHeader::new(v.dims(), v.spacing(), Dtype::F32);
    if v.intensity() == Intensity::Normalized {
        h.intensity = Some(Intensity::Normalized);
    }
    write_header(stem, &h)?;
    let mut w = BufWriter::new(File::create(payload_path(stem))?);
    for x in v.data() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_volume(stem: &Path) -> Result<Volume3> {
    let h = read_header(stem)?;
    h.check(Dtype::F32)?;
    let dims = Dims(h.dims);
    let bytes = read_payload(stem)?;
    if bytes.len() != dims.len() * 4 {
        return Err(Error::Format(format!(
            "payload has {} bytes, expected {}",
            bytes.len(),
            dims.len() * 4
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Volume3::new(dims, Spacing(h.spacing), data)?
        .with_intensity(h.intensity.unwrap_or_default()))
}

pub fn write_mask(stem: &Path, m: &Mask3) -> Result<()> {
    write_header(stem, &MvolHeader::new(m.dims(), m.spacing(), Dtype::U8))?;
    std::fs::write(payload_path(stem), m.data())?;
    Ok(())
}

pub fn read_mask(stem: &Path) -> Result<Mask3> {
    let h = read_header(stem)?;
    h.check(Dtype::U8)?;
    let dims = Dims(h.dims);
    let bytes = read_payload(stem)?;
    if bytes.len() != dims.len() {
        return Err(Error::Format(format!(
            "payload has {} bytes, expected {}",
            bytes.len(),
            dims.len()
        )));
    }
    Mask3::new(dims, Spacing(h.spacing), bytes)
}
