//! The binary epoch container and the CSV ingestion path.
//!
//! Binary layout (little-endian): magic "EEGE", version u32=1, channel count
//! u32, sample_rate f32, sample count u32, class i8 (−1 absent,
//! 0/1/2 = non_drowsy/drowsy/non_driving), vigilance f32 (NaN absent),
//! subject u32, then channels × samples f32 values channel-major.

use std::path::Path;
use std::str::FromStr;

use crate::signal::{ClassLabel, EegEpoch};

use super::{atomic_write, IoError, Reader};

const MAGIC: &[u8; 4] = b"EEGE";
const VERSION: u32 = 1;

pub fn epoch_to_bytes(epoch: &EegEpoch) -> Vec<u8> {
    let mut out = Vec::with_capacity(25 + 4 * epoch.samples.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(epoch.channels as u32).to_le_bytes());
    out.extend_from_slice(&(epoch.sample_rate as f32).to_le_bytes());
    out.extend_from_slice(&(epoch.n_samples as u32).to_le_bytes());
    let class: i8 = epoch.class_label.map(|c| c.index() as i8).unwrap_or(-1);
    out.push(class as u8);
    let vig = epoch.vigilance.map(|v| v as f32).unwrap_or(f32::NAN);
    out.extend_from_slice(&vig.to_le_bytes());
    out.extend_from_slice(&epoch.subject_id.to_le_bytes());
    for &v in &epoch.samples {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn epoch_from_bytes(bytes: &[u8]) -> Result<EegEpoch, IoError> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(IoError::Format(format!("bad magic {magic:?}, expected \"EEGE\"")));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(IoError::Format(format!("unsupported epoch version {version}")));
    }
    let channels = r.u32("channel count")? as usize;
    let sample_rate = r.f32("sample rate")? as f64;
    let n_samples = r.u32("sample count")? as usize;
    let class_code = r.i8("class label")?;
    let class = match class_code {
        -1 => None,
        c if (0..=2).contains(&c) => ClassLabel::from_index(c as usize),
        c => return Err(IoError::Corrupt(format!("invalid class code {c}"))),
    };
    let vig_raw = r.f32("vigilance")?;
    let vigilance = if vig_raw.is_nan() { None } else { Some(vig_raw as f64) };
    let subject_id = r.u32("subject id")?;
    let mut samples = Vec::with_capacity(channels * n_samples);
    for i in 0..channels * n_samples {
        samples.push(r.f32(&format!("sample {i}"))? as f64);
    }
    if !r.is_empty() {
        return Err(IoError::Corrupt("trailing bytes after sample data".into()));
    }
    let epoch = EegEpoch::new(channels, sample_rate, samples, subject_id)
        .map_err(|e| IoError::Corrupt(e.to_string()))?;
    epoch
        .with_labels(class, vigilance)
        .map_err(|e| IoError::Corrupt(e.to_string()))
}

pub fn write_epoch(path: &Path, epoch: &EegEpoch) -> Result<(), IoError> {
    atomic_write(path, &epoch_to_bytes(epoch))
}

pub fn read_epoch(path: &Path) -> Result<EegEpoch, IoError> {
    epoch_from_bytes(&std::fs::read(path)?)
}

// ── CSV ingestion ───────────────────────────────────────────────────────────

/// One epoch per file: header `subject,label,vigilance,ch0..chN`, one row
/// per time sample. Subject, label, and vigilance must be constant across
/// rows; the sample rate is external to the format.
pub fn read_epoch_csv(path: &Path, sample_rate: f64) -> Result<EegEpoch, IoError> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.len() < 4 || &headers[0] != "subject" || &headers[1] != "label" || &headers[2] != "vigilance"
    {
        return Err(IoError::Format(
            "epoch CSV header must start with subject,label,vigilance,ch0..".into(),
        ));
    }
    let channels = headers.len() - 3;
    let mut subject: Option<u32> = None;
    let mut label: Option<Option<ClassLabel>> = None;
    let mut vigilance: Option<Option<f64>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        if record.len() != headers.len() {
            return Err(IoError::Corrupt(format!(
                "row {} has {} fields, header has {}",
                rows.len() + 2,
                record.len(),
                headers.len()
            )));
        }
        let s: u32 = record[0]
            .parse()
            .map_err(|_| IoError::Corrupt(format!("bad subject id {:?}", &record[0])))?;
        let l = if record[1].is_empty() {
            None
        } else {
            Some(
                ClassLabel::from_str(&record[1])
                    .map_err(|e| IoError::Corrupt(e.to_string()))?,
            )
        };
        let v = if record[2].is_empty() {
            None
        } else {
            Some(
                record[2]
                    .parse::<f64>()
                    .map_err(|_| IoError::Corrupt(format!("bad vigilance {:?}", &record[2])))?,
            )
        };
        match (&subject, &label, &vigilance) {
            (None, _, _) => {
                subject = Some(s);
                label = Some(l);
                vigilance = Some(v);
            }
            (Some(s0), Some(l0), Some(v0)) => {
                if *s0 != s || *l0 != l || *v0 != v {
                    return Err(IoError::Corrupt(
                        "subject, label, and vigilance must be constant within one epoch file"
                            .into(),
                    ));
                }
            }
            _ => unreachable!("label and vigilance are set together with subject"),
        }
        let mut row = Vec::with_capacity(channels);
        for ch in 0..channels {
            row.push(record[3 + ch].parse::<f64>().map_err(|_| {
                IoError::Corrupt(format!("bad sample value {:?}", &record[3 + ch]))
            })?);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(IoError::Corrupt("epoch CSV has no sample rows".into()));
    }
    // Transpose row-per-time into channel-major storage.
    let t = rows.len();
    let mut samples = vec![0.0; channels * t];
    for (i, row) in rows.iter().enumerate() {
        for (ch, &v) in row.iter().enumerate() {
            samples[ch * t + i] = v;
        }
    }
    let epoch = EegEpoch::new(channels, sample_rate, samples, subject.expect("rows nonempty"))
        .map_err(|e| IoError::Corrupt(e.to_string()))?;
    epoch
        .with_labels(label.flatten(), vigilance.flatten())
        .map_err(|e| IoError::Corrupt(e.to_string()))
}

fn csv_err(e: csv::Error) -> IoError {
    IoError::Corrupt(e.to_string())
}

// ── Manifest ────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: String,
    pub subject: u32,
    pub split: String,
    pub class: Option<ClassLabel>,
    pub vigilance: Option<f64>,
}

/// Manifest CSV: `# `-prefixed comment lines (profile echoes for oracle
/// checks), then `path,subject,split,class,vigilance` rows.
pub fn write_manifest(
    path: &Path,
    comments: &[String],
    entries: &[ManifestEntry],
) -> Result<(), IoError> {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str("path,subject,split,class,vigilance\n");
    for e in entries {
        let class = e.class.map(|c| c.name().to_string()).unwrap_or_default();
        let vig = e.vigilance.map(|v| format!("{v:?}")).unwrap_or_default();
        out.push_str(&format!("{},{},{},{},{}\n", e.path, e.subject, e.split, class, vig));
    }
    atomic_write(path, out.as_bytes())
}

pub fn read_manifest(path: &Path) -> Result<(Vec<String>, Vec<ManifestEntry>), IoError> {
    let text = std::fs::read_to_string(path)?;
    let mut comments = Vec::new();
    let mut entries = Vec::new();
    let mut saw_header = false;
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            comments.push(c.trim().to_string());
            continue;
        }
        if !saw_header {
            if line != "path,subject,split,class,vigilance" {
                return Err(IoError::Format(format!("unexpected manifest header {line:?}")));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(IoError::Corrupt(format!("manifest line {} malformed", lineno + 1)));
        }
        entries.push(ManifestEntry {
            path: fields[0].to_string(),
            subject: fields[1]
                .parse()
                .map_err(|_| IoError::Corrupt(format!("bad subject {:?}", fields[1])))?,
            split: fields[2].to_string(),
            class: if fields[3].is_empty() {
                None
            } else {
                Some(
                    ClassLabel::from_str(fields[3])
                        .map_err(|e| IoError::Corrupt(e.to_string()))?,
                )
            },
            vigilance: if fields[4].is_empty() {
                None
            } else {
                Some(
                    fields[4]
                        .parse()
                        .map_err(|_| IoError::Corrupt(format!("bad vigilance {:?}", fields[4])))?,
                )
            },
        });
    }
    if !saw_header {
        return Err(IoError::Format("manifest has no header row".into()));
    }
    Ok((comments, entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_epoch() -> EegEpoch {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<f64> = (0..3 * 16)
            .map(|_| (rng.random_range(-1.0f64..1.0) * 1e4).round() / 1e4)
            .collect();
        EegEpoch::new(3, 200.0, samples, 42)
            .unwrap()
            .with_labels(Some(ClassLabel::Drowsy), Some(0.75))
            .unwrap()
    }

    #[test]
    fn epoch_bytes_round_trip_bit_exactly() {
        let epoch = sample_epoch();
        let bytes = epoch_to_bytes(&epoch);
        let back = epoch_from_bytes(&bytes).unwrap();
        assert_eq!(epoch_to_bytes(&back), bytes);
        assert_eq!(back.channels, 3);
        assert_eq!(back.subject_id, 42);
        assert_eq!(back.class_label, Some(ClassLabel::Drowsy));
    }

    #[test]
    fn epoch_absent_labels_round_trip() {
        let mut epoch = sample_epoch();
        epoch.class_label = None;
        epoch.vigilance = None;
        let back = epoch_from_bytes(&epoch_to_bytes(&epoch)).unwrap();
        assert_eq!(back.class_label, None);
        assert_eq!(back.vigilance, None);
    }

    #[test]
    fn epoch_bad_magic_and_truncation_rejected() {
        let epoch = sample_epoch();
        let mut bytes = epoch_to_bytes(&epoch);
        assert!(matches!(
            epoch_from_bytes(&bytes[..20]),
            Err(IoError::Corrupt(_))
        ));
        bytes[0] = b'X';
        assert!(matches!(epoch_from_bytes(&bytes), Err(IoError::Format(_))));
    }

    #[test]
    fn epoch_file_write_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.eege");
        let epoch = sample_epoch();
        write_epoch(&path, &epoch).unwrap();
        let back = read_epoch(&path).unwrap();
        assert_eq!(epoch_to_bytes(&back), epoch_to_bytes(&epoch));
    }

    #[test]
    fn csv_ingestion_matches_binary_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let mut text = String::from("subject,label,vigilance,ch0,ch1\n");
        let rows = [[0.5, -1.0], [0.25, 0.75], [0.0, 0.125]];
        for r in rows {
            text.push_str(&format!("9,drowsy,0.5,{},{}\n", r[0], r[1]));
        }
        std::fs::write(&path, text).unwrap();
        let epoch = read_epoch_csv(&path, 250.0).unwrap();
        assert_eq!(epoch.channels, 2);
        assert_eq!(epoch.n_samples, 3);
        assert_eq!(epoch.subject_id, 9);
        assert_eq!(epoch.class_label, Some(ClassLabel::Drowsy));
        assert_eq!(epoch.channel(0), &[0.5, 0.25, 0.0]);
        assert_eq!(epoch.channel(1), &[-1.0, 0.75, 0.125]);
    }

    #[test]
    fn csv_ingestion_rejects_inconsistent_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "subject,label,vigilance,ch0\n1,drowsy,,0.5\n2,drowsy,,0.5\n")
            .unwrap();
        assert!(read_epoch_csv(&path, 200.0).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let entries = vec![
            ManifestEntry {
                path: "train/subject_0000/drowsy_0001.eege".into(),
                subject: 0,
                split: "train".into(),
                class: Some(ClassLabel::Drowsy),
                vigilance: Some(0.8),
            },
            ManifestEntry {
                path: "vig/subject_2000/epoch_0000.eege".into(),
                subject: 2000,
                split: "vigilance".into(),
                class: None,
                vigilance: None,
            },
        ];
        let comments = vec!["profile_drowsy=0.8,0.8,2,0.6,0.4".to_string()];
        write_manifest(&path, &comments, &entries).unwrap();
        let (back_comments, back_entries) = read_manifest(&path).unwrap();
        assert_eq!(back_comments, comments);
        assert_eq!(back_entries, entries);
    }
}
