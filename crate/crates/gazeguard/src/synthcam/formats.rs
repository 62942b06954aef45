//! On-disk dataset formats: feature CSV, binary PGM images with a CSV index,
//! and session files. All text files use LF endings; angles are written with
//! 9 significant digits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::dataset::SessionFrame;
use super::types::{EyeImage, FeatureRecord, GazeAngles, HeadPose, IMG_HEIGHT, IMG_WIDTH};
use crate::error::{Error, Result};
use crate::util::{atomic_write, fmt_sig9};

pub const FEATURE_CSV_HEADER: &str =
    "left_yaw,left_pitch,right_yaw,right_pitch,head_yaw,head_pitch,dist,label";
pub const IMAGE_INDEX_HEADER: &str = "file,yaw,pitch,head_yaw,head_pitch";
pub const SESSION_INDEX_HEADER: &str = "left_file,right_file,head_yaw,head_pitch,dist,label";

pub fn feature_csv_bytes(records: &[FeatureRecord]) -> Vec<u8> {
    let mut out = String::with_capacity(records.len() * 96 + 64);
    out.push_str(FEATURE_CSV_HEADER);
    out.push('\n');
    for r in records {
        let f = r.features();
        for v in f {
            let _ = write!(out, "{},", fmt_sig9(v));
        }
        let _ = writeln!(out, "{}", r.label);
    }
    out.into_bytes()
}

pub fn write_feature_csv(path: &Path, records: &[FeatureRecord]) -> Result<()> {
    atomic_write(path, &feature_csv_bytes(records))
}

fn parse_f64(field: &str, line_no: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Data(format!("line {line_no}: bad number {field:?}")))
}

pub fn read_feature_csv(path: &Path) -> Result<Vec<FeatureRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_feature_csv(&text)
}

pub fn parse_feature_csv(text: &str) -> Result<Vec<FeatureRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == FEATURE_CSV_HEADER => {}
        Some((_, header)) => {
            return Err(Error::Data(format!(
                "line 1: expected header {FEATURE_CSV_HEADER:?}, got {header:?}"
            )))
        }
        None => return Err(Error::Data("empty feature CSV".into())),
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Data(format!(
                "line {line_no}: expected 8 fields, got {}",
                fields.len()
            )));
        }
        let vals: Vec<f64> = fields[..7]
            .iter()
            .map(|f| parse_f64(f, line_no))
            .collect::<Result<_>>()?;
        let label: u8 = fields[7]
            .trim()
            .parse()
            .map_err(|_| Error::Data(format!("line {line_no}: bad label {:?}", fields[7])))?;
        let record = FeatureRecord {
            left_eye: GazeAngles {
                yaw: vals[0],
                pitch: vals[1],
            },
            right_eye: GazeAngles {
                yaw: vals[2],
                pitch: vals[3],
            },
            head: HeadPose {
                yaw: vals[4],
                pitch: vals[5],
            },
            distance_m: vals[6],
            label,
        };
        record
            .validate()
            .map_err(|e| Error::Data(format!("line {line_no}: {e}")))?;
        records.push(record);
    }
    Ok(records)
}

/// Binary PGM (P5, maxval 255).
pub fn pgm_bytes(img: &EyeImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", IMG_WIDTH, IMG_HEIGHT).into_bytes();
    out.extend(img.pixels.iter().map(|&p| (p * 255.0).round() as u8));
    out
}

pub fn write_pgm(path: &Path, img: &EyeImage) -> Result<()> {
    atomic_write(path, &pgm_bytes(img))
}

/// Parses a P5 PGM produced by this crate (60x36, maxval 255); the gaze and
/// head labels live in the index CSV, so the caller supplies them.
pub fn read_pgm_pixels(path: &Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let header_end = bytes
        .iter()
        .enumerate()
        .filter(|(_, &b)| b == b'\n')
        .map(|(i, _)| i)
        .nth(2)
        .ok_or_else(|| Error::Data(format!("{}: malformed PGM header", path.display())))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| Error::Data(format!("{}: malformed PGM header", path.display())))?;
    let mut parts = header.split_ascii_whitespace();
    let magic = parts.next();
    let w: usize = parts.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let h: usize = parts.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let maxval: usize = parts.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    if magic != Some("P5") || w != IMG_WIDTH || h != IMG_HEIGHT || maxval != 255 {
        return Err(Error::Data(format!(
            "{}: expected P5 {}x{} maxval 255",
            path.display(),
            IMG_WIDTH,
            IMG_HEIGHT
        )));
    }
    let raster = &bytes[header_end + 1..];
    if raster.len() != IMG_WIDTH * IMG_HEIGHT {
        return Err(Error::Data(format!(
            "{}: raster has {} bytes, expected {}",
            path.display(),
            raster.len(),
            IMG_WIDTH * IMG_HEIGHT
        )));
    }
    Ok(raster.iter().map(|&b| b as f64 / 255.0).collect())
}

/// Writes an image dataset: one PGM per image plus the index CSV at `path`.
/// Image files land next to the index in `<stem>_imgs/`.
pub fn write_image_dataset(index_path: &Path, images: &[EyeImage]) -> Result<PathBuf> {
    let stem = index_path
        .file_stem()
        .ok_or_else(|| Error::Argument(format!("bad index path {}", index_path.display())))?
        .to_string_lossy()
        .to_string();
    let dir = index_path
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_default()
        .join(format!("{stem}_imgs"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let mut index = String::from(IMAGE_INDEX_HEADER);
    index.push('\n');
    for (i, img) in images.iter().enumerate() {
        let file = format!("{stem}_imgs/img_{i:06}.pgm");
        write_pgm(&dir.join(format!("img_{i:06}.pgm")), img)?;
        let _ = writeln!(
            index,
            "{},{},{},{},{}",
            file,
            fmt_sig9(img.gaze.yaw),
            fmt_sig9(img.gaze.pitch),
            fmt_sig9(img.head.yaw),
            fmt_sig9(img.head.pitch)
        );
    }
    atomic_write(index_path, index.as_bytes())?;
    Ok(dir)
}

/// Loads an image dataset written by `write_image_dataset`.
pub fn read_image_dataset(index_path: &Path) -> Result<Vec<EyeImage>> {
    let text = std::fs::read_to_string(index_path).map_err(|e| Error::io(index_path, e))?;
    let base = index_path
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_default();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == IMAGE_INDEX_HEADER => {}
        _ => {
            return Err(Error::Data(format!(
                "{}: line 1: expected header {IMAGE_INDEX_HEADER:?}",
                index_path.display()
            )))
        }
    }
    let mut images = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Data(format!(
                "line {line_no}: expected 5 fields, got {}",
                fields.len()
            )));
        }
        let pixels = read_pgm_pixels(&base.join(fields[0]))?;
        let gaze = GazeAngles {
            yaw: parse_f64(fields[1], line_no)?,
            pitch: parse_f64(fields[2], line_no)?,
        };
        let head = HeadPose {
            yaw: parse_f64(fields[3], line_no)?,
            pitch: parse_f64(fields[4], line_no)?,
        };
        images.push(EyeImage::new(pixels, gaze, head)?);
    }
    Ok(images)
}

/// Writes a session: left/right PGMs per frame plus the index CSV.
pub fn write_session(index_path: &Path, frames: &[SessionFrame]) -> Result<()> {
    let stem = index_path
        .file_stem()
        .ok_or_else(|| Error::Argument(format!("bad session path {}", index_path.display())))?
        .to_string_lossy()
        .to_string();
    let dir = index_path
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_default()
        .join(format!("{stem}_frames"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let mut index = String::from(SESSION_INDEX_HEADER);
    index.push('\n');
    for (i, frame) in frames.iter().enumerate() {
        let left = format!("{stem}_frames/left_{i:06}.pgm");
        let right = format!("{stem}_frames/right_{i:06}.pgm");
        write_pgm(&dir.join(format!("left_{i:06}.pgm")), &frame.left_img)?;
        write_pgm(&dir.join(format!("right_{i:06}.pgm")), &frame.right_img)?;
        let _ = writeln!(
            index,
            "{},{},{},{},{},{}",
            left,
            right,
            fmt_sig9(frame.head.yaw),
            fmt_sig9(frame.head.pitch),
            fmt_sig9(frame.distance_m),
            frame.label
        );
    }
    atomic_write(index_path, index.as_bytes())
}

/// Loads a session written by `write_session`.
pub fn read_session(index_path: &Path) -> Result<Vec<SessionFrame>> {
    let text = std::fs::read_to_string(index_path).map_err(|e| Error::io(index_path, e))?;
    let base = index_path
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_default();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == SESSION_INDEX_HEADER => {}
        Some((_, h)) => {
            return Err(Error::Data(format!(
                "{}: line 1: expected header {SESSION_INDEX_HEADER:?}, got {h:?}",
                index_path.display()
            )))
        }
        None => {
            return Err(Error::Data(format!(
                "{}: empty session file",
                index_path.display()
            )))
        }
    }
    let mut frames = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Data(format!(
                "line {line_no}: expected 6 fields, got {}",
                fields.len()
            )));
        }
        let head = HeadPose {
            yaw: parse_f64(fields[2], line_no)?,
            pitch: parse_f64(fields[3], line_no)?,
        };
        let distance_m = parse_f64(fields[4], line_no)?;
        let label: u8 = fields[5]
            .trim()
            .parse()
            .map_err(|_| Error::Data(format!("line {line_no}: bad label {:?}", fields[5])))?;
        let placeholder = GazeAngles {
            yaw: 0.0,
            pitch: 0.0,
        };
        let left_img = EyeImage::new(read_pgm_pixels(&base.join(fields[0]))?, placeholder, head)?;
        let right_img = EyeImage::new(read_pgm_pixels(&base.join(fields[1]))?, placeholder, head)?;
        frames.push(SessionFrame {
            left_img,
            right_img,
            head,
            distance_m,
            label,
        });
    }
    if frames.is_empty() {
        return Err(Error::Data(format!(
            "{}: session has no frames",
            index_path.display()
        )));
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthcam::dataset::{generate_feature_dataset, generate_image_dataset};
    use crate::synthcam::types::SessionConfig;

    #[test]
    fn feature_csv_format_is_exact() {
        let rec = FeatureRecord {
            left_eye: GazeAngles {
                yaw: 0.1,
                pitch: -0.2,
            },
            right_eye: GazeAngles {
                yaw: 0.3,
                pitch: 0.4,
            },
            head: HeadPose {
                yaw: 0.0,
                pitch: 0.5,
            },
            distance_m: 0.6,
            label: 1,
        };
        let bytes = feature_csv_bytes(&[rec]);
        let text = String::from_utf8(bytes).unwrap();
        assert!(!text.contains('\r'));
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), FEATURE_CSV_HEADER);
        assert_eq!(
            lines.next().unwrap(),
            "1.00000000e-1,-2.00000000e-1,3.00000000e-1,4.00000000e-1,\
             0.00000000e0,5.00000000e-1,6.00000000e-1,1"
        );
    }

    #[test]
    fn feature_csv_round_trips() {
        let cfg = SessionConfig {
            seed: 17,
            ..Default::default()
        };
        let recs = generate_feature_dataset(&cfg, 100, true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        write_feature_csv(&path, &recs).unwrap();
        let back = read_feature_csv(&path).unwrap();
        assert_eq!(back.len(), recs.len());
        for (a, b) in recs.iter().zip(&back) {
            // 9 significant digits survive the round trip at ~1e-9 relative
            assert!((a.left_eye.yaw - b.left_eye.yaw).abs() < 1e-8);
            assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = format!("{FEATURE_CSV_HEADER}\n1,2,3\n");
        let err = parse_feature_csv(&text).unwrap_err();
        assert!(err.to_string().contains("line 2"), "got {err}");
    }

    #[test]
    fn pgm_bytes_have_expected_header_and_size() {
        let img = EyeImage::new(
            vec![0.5; IMG_WIDTH * IMG_HEIGHT],
            GazeAngles {
                yaw: 0.0,
                pitch: 0.0,
            },
            HeadPose {
                yaw: 0.0,
                pitch: 0.0,
            },
        )
        .unwrap();
        let bytes = pgm_bytes(&img);
        assert!(bytes.starts_with(b"P5\n60 36\n255\n"));
        assert_eq!(bytes.len(), 13 + IMG_WIDTH * IMG_HEIGHT);
        assert_eq!(bytes[13], 128); // 0.5 * 255 rounds to 128
    }

    #[test]
    fn image_dataset_round_trips_through_disk() {
        let cfg = SessionConfig {
            seed: 2,
            ..Default::default()
        };
        let imgs = generate_image_dataset(&cfg, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let index = dir.path().join("set.csv");
        write_image_dataset(&index, &imgs).unwrap();
        let back = read_image_dataset(&index).unwrap();
        assert_eq!(back.len(), 4);
        for (a, b) in imgs.iter().zip(&back) {
            // pixels quantized to u8 on disk
            for (pa, pb) in a.pixels.iter().zip(&b.pixels) {
                assert!((pa - pb).abs() <= 0.5 / 255.0 + 1e-12);
            }
            assert!((a.gaze.yaw - b.gaze.yaw).abs() < 1e-8);
        }
    }
}
