//! MIAS annotation parsing, image loading and ground-truth circles.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::cnn::{ABNORMAL, NORMAL};
use crate::error::{Error, Result};
use crate::image::{BinaryMask, GrayImage};
use crate::pnm::load_pgm;
use crate::scalar::Scalar;

pub const MIAS_SIZE: usize = 1024;
pub const MIAS_TOTAL: usize = 322;
pub const MIAS_ABNORMAL: usize = 119;

macro_rules! code_enum {
    ($name:ident { $($variant:ident => $code:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($code => Ok($name::$variant),)+
                    _ => Err(format!("unknown {} code {:?}", stringify!($name).to_lowercase(), s)),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self {
                    $($name::$variant => $code),+
                })
            }
        }
    };
}

code_enum!(Tissue { Fatty => "F", Glandular => "G", Dense => "D" });
code_enum!(Abnormality {
    Calcification => "CALC",
    Circumscribed => "CIRC",
    Spiculated => "SPIC",
    Miscellaneous => "MISC",
    Architectural => "ARCH",
    Asymmetry => "ASYM",
    Normal => "NORM",
});
code_enum!(Severity { Benign => "B", Malignant => "M" });

impl Abnormality {
    pub fn label(self) -> usize {
        if self == Abnormality::Normal {
            NORMAL
        } else {
            ABNORMAL
        }
    }
}

/// One line of the MIAS info file. `center` is `(x, y)` with the origin at
/// the bottom-left corner, as in the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiasRecord {
    pub id: String,
    pub tissue: Tissue,
    pub abnormality: Abnormality,
    pub severity: Option<Severity>,
    pub center: Option<(u32, u32)>,
    pub radius: Option<u32>,
}

impl MiasRecord {
    pub fn label(&self) -> usize {
        self.abnormality.label()
    }

    pub fn has_geometry(&self) -> bool {
        self.center.is_some() && self.radius.is_some()
    }
}

fn parse_line(line: &str, lineno: usize) -> Result<MiasRecord> {
    let err = |message: String| Error::Parse {
        line: lineno,
        message,
    };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if !matches!(fields.len(), 3 | 4 | 7) {
        return Err(err(format!(
            "expected 3, 4 or 7 fields, found {}",
            fields.len()
        )));
    }
    let tissue = fields[1].parse().map_err(err)?;
    let abnormality: Abnormality = fields[2].parse().map_err(err)?;
    if abnormality == Abnormality::Normal && fields.len() > 3 {
        return Err(err("normal record carries lesion fields".into()));
    }
    let severity = fields.get(3).map(|s| s.parse()).transpose().map_err(err)?;
    let (mut center, mut radius) = (None, None);
    if fields.len() == 7 {
        let num = |s: &str| {
            s.parse::<u32>()
                .map_err(|_| err(format!("expected a pixel count, found {:?}", s)))
        };
        let (x, y, r) = (num(fields[4])?, num(fields[5])?, num(fields[6])?);
        if x as usize > MIAS_SIZE || y as usize > MIAS_SIZE {
            return Err(err(format!(
                "centre ({}, {}) lies outside the {}-pixel frame",
                x, y, MIAS_SIZE
            )));
        }
        center = Some((x, y));
        radius = Some(r);
    }
    Ok(MiasRecord {
        id: fields[0].to_string(),
        tissue,
        abnormality,
        severity,
        center,
        radius,
    })
}

/// Parse the whitespace-separated info file: `id tissue class [severity
/// [x y radius]]`. Blank lines and lines starting with `#` are skipped;
/// repeated ids (several lesions in one image) give one record each.
pub fn parse_info(text: &str) -> Result<Vec<MiasRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(i, l)| parse_line(l, i + 1))
        .collect()
}

/// An image with every annotation that refers to it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage<T> {
    pub image: GrayImage<T>,
    pub label: usize,
    pub records: Vec<MiasRecord>,
}

impl<T> LabeledImage<T> {
    pub fn id(&self) -> &str {
        &self.records[0].id
    }
}

/// Group records by id, keeping first-appearance order.
pub fn group_records(records: Vec<MiasRecord>) -> Result<Vec<Vec<MiasRecord>>> {
    let mut order: Vec<Vec<MiasRecord>> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for r in records {
        match index.get(&r.id) {
            Some(&i) => {
                if order[i][0].label() != r.label() {
                    return Err(Error::Format(format!(
                        "{} is annotated both normal and abnormal",
                        r.id
                    )));
                }
                order[i].push(r);
            }
            None => {
                index.insert(r.id.clone(), order.len());
                order.push(vec![r]);
            }
        }
    }
    Ok(order)
}

/// Load `<id>.pgm` from `image_dir` for every id in the info file.
pub fn load_dataset<T: Scalar>(
    image_dir: impl AsRef<Path>,
    info_path: impl AsRef<Path>,
) -> Result<Vec<LabeledImage<T>>> {
    load_dataset_with(image_dir, info_path, Ok)
}

/// [`load_dataset`], passing each image through `prepare` as it is read
/// (e.g. to downscale before the next one is loaded).
pub fn load_dataset_with<T: Scalar>(
    image_dir: impl AsRef<Path>,
    info_path: impl AsRef<Path>,
    mut prepare: impl FnMut(GrayImage<T>) -> Result<GrayImage<T>>,
) -> Result<Vec<LabeledImage<T>>> {
    let info_path = info_path.as_ref();
    let text = std::fs::read_to_string(info_path)
        .map_err(|e| Error::io(format!("reading {}", info_path.display()), e))?;
    let groups = group_records(parse_info(&text)?)?;
    let mut out = Vec::with_capacity(groups.len());
    for records in groups {
        let id = records[0].id.clone();
        let path = image_dir.as_ref().join(format!("{}.pgm", id));
        let image = load_pgm(&path).map_err(|e| match e {
            Error::Io { source, .. } => {
                Error::io(format!("image {} ({})", id, path.display()), source)
            }
            other => Error::Format(format!("image {}: {}", id, other)),
        })?;
        out.push(LabeledImage {
            image: prepare(image)?,
            label: records[0].label(),
            records,
        });
    }
    let abnormal = out.iter().filter(|l| l.label == ABNORMAL).count();
    if out.len() != MIAS_TOTAL || abnormal != MIAS_ABNORMAL {
        log::warn!(
            "dataset has {} images ({} abnormal); the full MIAS set has {} ({} abnormal)",
            out.len(),
            abnormal,
            MIAS_TOTAL,
            MIAS_ABNORMAL
        );
    }
    Ok(out)
}

/// Filled lesion circle in row/column coordinates: the file's `y` is
/// flipped to `height - y`. Pixels outside the image are dropped.
pub fn ground_truth_mask(record: &MiasRecord, width: usize, height: usize) -> Result<BinaryMask> {
    let ((x, y), r) = match (record.center, record.radius) {
        (Some(c), Some(r)) if record.abnormality != Abnormality::Normal => (c, r),
        _ => {
            return Err(Error::arg(format!(
                "{} ({}) has no lesion geometry",
                record.id, record.abnormality
            )))
        }
    };
    let cx = x as f64;
    let cy = height as f64 - y as f64;
    let r2 = (r as f64) * (r as f64);
    Ok(BinaryMask::from_fn(width, height, |row, col| {
        let (dy, dx) = (row as f64 - cy, col as f64 - cx);
        dy * dy + dx * dx <= r2
    }))
}

/// Union of the circles of every record with geometry; `None` if there is none.
pub fn ground_truth_union(
    records: &[MiasRecord],
    width: usize,
    height: usize,
) -> Result<Option<BinaryMask>> {
    let mut acc: Option<BinaryMask> = None;
    for r in records
        .iter()
        .filter(|r| r.has_geometry() && r.abnormality != Abnormality::Normal)
    {
        let m = ground_truth_mask(r, width, height)?;
        acc = Some(match acc {
            Some(a) => a.union(&m)?,
            None => m,
        });
    }
    Ok(acc)
}
