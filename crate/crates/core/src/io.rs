//! Image files and on-disk datasets.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dataset::{Dataset, Manifest, MANIFEST_FILE};
use crate::imgproc::GrayImage;
use crate::stream::{Frame, FrameSource, StreamError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: invalid manifest: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// BT.601 luma, rounded to nearest.
fn luma(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .round()
        .clamp(0.0, 255.0) as u8
}

/// Loads a PGM or PNG file as 8-bit grayscale. Colour input is converted
/// with BT.601 weights.
pub fn load_gray(path: &Path) -> Result<GrayImage, IoError> {
    let decoded = image::open(path).map_err(|source| IoError::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let pixels = match decoded {
        image::DynamicImage::ImageLuma8(g) => g.into_raw(),
        image::DynamicImage::ImageLumaA8(g) => g.pixels().map(|p| p.0[0]).collect(),
        other => other.to_rgb8().pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect(),
    };
    GrayImage::new(w, h, pixels).map_err(|e| IoError::Invalid {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Saves as PGM or PNG according to the file extension.
pub fn save_gray(img: &GrayImage, path: &Path) -> Result<(), IoError> {
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, img.pixels().to_vec())
        .expect("buffer matches dimensions");
    buf.save(path).map_err(|source| IoError::Decode {
        path: path.to_path_buf(),
        source,
    })
}

/// Saves an RGB buffer (row-major, 3 bytes per pixel) as PNG.
pub fn save_rgb(width: usize, height: usize, rgb: Vec<u8>, path: &Path) -> Result<(), IoError> {
    let buf = image::RgbImage::from_raw(width as u32, height as u32, rgb).ok_or_else(|| IoError::Invalid {
        path: path.to_path_buf(),
        reason: "RGB buffer does not match dimensions".into(),
    })?;
    buf.save(path).map_err(|source| IoError::Decode {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (entry, img) in dataset.manifest.images.iter().zip(&dataset.images) {
        save_gray(img, &dir.join(&entry.file))?;
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, dataset.manifest.to_json()).map_err(io_err(&path))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, IoError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Manifest { path, source })
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, IoError> {
    let manifest = read_manifest(dir)?;
    let images = manifest
        .images
        .iter()
        .map(|e| load_gray(&dir.join(&e.file)))
        .collect::<Result<Vec<_>, _>>()?;
    Dataset::new(manifest, images).map_err(|e| IoError::Invalid {
        path: dir.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Image files of a directory (PGM/PNG), sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "png"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Replays image files in order, decoding lazily.
pub struct ReplaySource {
    files: Vec<PathBuf>,
    next: usize,
    fps: f64,
}

impl ReplaySource {
    pub fn from_files(files: Vec<PathBuf>, fps: f64) -> Self {
        Self {
            files,
            next: 0,
            fps: if fps > 0.0 { fps } else { 30.0 },
        }
    }

    /// All images of a directory, or the manifest order when the directory
    /// holds a dataset.
    pub fn open(dir: &Path, fps: f64) -> Result<Self, StreamError> {
        let unavailable = |e: IoError| StreamError::SourceUnavailable(e.to_string());
        let files = if dir.join(MANIFEST_FILE).is_file() {
            read_manifest(dir)
                .map_err(unavailable)?
                .images
                .iter()
                .map(|e| dir.join(&e.file))
                .collect()
        } else {
            list_images(dir).map_err(unavailable)?
        };
        if files.is_empty() {
            return Err(StreamError::SourceUnavailable(format!(
                "{}: no PGM or PNG images",
                dir.display()
            )));
        }
        Ok(Self::from_files(files, fps))
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }
}

impl FrameSource for ReplaySource {
    fn next_frame(&mut self) -> Result<Option<Frame>, StreamError> {
        let Some(path) = self.files.get(self.next) else {
            return Ok(None);
        };
        let image = load_gray(path).map_err(|e| StreamError::SourceUnavailable(e.to_string()))?;
        let t_ms = (self.next as f64 * 1000.0 / self.fps).round() as u64;
        self.next += 1;
        Ok(Some(Frame { image, t_ms }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{sample_dataset, ImageFormat};
    use crate::synth::SyntheticEyeSpec;

    #[test]
    fn luma_weights() {
        assert_eq!(luma(255, 0, 0), 76);
        assert_eq!(luma(0, 255, 0), 150);
        assert_eq!(luma(0, 0, 255), 29);
        assert_eq!(luma(255, 255, 255), 255);
    }

    #[test]
    fn pgm_and_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::from_fn(13, 7, |x, y| (x * 19 + y * 3) as u8);
        for name in ["a.pgm", "a.png"] {
            let p = dir.path().join(name);
            save_gray(&img, &p).unwrap();
            assert_eq!(load_gray(&p).unwrap(), img);
        }
    }

    #[test]
    fn colour_png_uses_bt601() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        save_rgb(2, 1, vec![255, 0, 0, 10, 200, 30], &p).unwrap();
        let g = load_gray(&p).unwrap();
        assert_eq!(g.get(0, 0), 76);
        assert_eq!(g.get(1, 0), luma(10, 200, 30));
    }

    #[test]
    fn dataset_round_trip_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let d = sample_dataset(&SyntheticEyeSpec::default(), 3, ImageFormat::Png).unwrap();
        write_dataset(dir.path(), &d).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.manifest, d.manifest);
        assert_eq!(back.images, d.images);
        let mut src = ReplaySource::open(dir.path(), 10.0).unwrap();
        let mut n = 0;
        while let Some(f) = src.next_frame().unwrap() {
            assert_eq!(f.image, d.images[n]);
            assert_eq!(f.t_ms, n as u64 * 100);
            n += 1;
        }
        assert_eq!(n, 3);
    }

    #[test]
    fn empty_directory_is_unavailable() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            ReplaySource::open(dir.path(), 30.0),
            Err(StreamError::SourceUnavailable(_))
        ));
    }
}
