use std::collections::BTreeSet;
use std::path::Path;

use super::{load_png, Image};
use crate::error::{Error, Result};

/// Rainy/clean pairs loaded from `<root>/rain/*.png` and `<root>/norain/*.png`,
/// matched by file stem and sorted by name.
#[derive(Clone, Debug)]
pub struct PairedDataset {
    pub names: Vec<String>,
    pub rainy: Vec<Image>,
    pub clean: Vec<Image>,
}

/// Indices of the training and held-out portions of a dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub held_out: Vec<usize>,
}

fn png_stems(dir: &Path) -> Result<BTreeSet<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut stems = BTreeSet::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.insert(stem.to_string());
            }
        }
    }
    Ok(stems)
}

impl PairedDataset {
    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let (rain_dir, clean_dir) = (root.join("rain"), root.join("norain"));
        for d in [&rain_dir, &clean_dir] {
            if !d.is_dir() {
                return Err(Error::Dataset(format!("missing directory {}", d.display())));
            }
        }
        let rain = png_stems(&rain_dir)?;
        let clean = png_stems(&clean_dir)?;
        let unpaired: Vec<String> = rain
            .symmetric_difference(&clean)
            .map(|s| {
                let side = if rain.contains(s) { "rain" } else { "norain" };
                format!("{side}/{s}.png")
            })
            .collect();
        if !unpaired.is_empty() {
            return Err(Error::Dataset(format!("unpaired files: {}", unpaired.join(", "))));
        }
        if rain.is_empty() {
            return Err(Error::Dataset(format!("no png pairs under {}", root.display())));
        }
        let mut ds = PairedDataset {
            names: Vec::new(),
            rainy: Vec::new(),
            clean: Vec::new(),
        };
        for name in rain {
            let r = load_png(rain_dir.join(format!("{name}.png")))?;
            let c = load_png(clean_dir.join(format!("{name}.png")))?;
            if (r.height(), r.width()) != (c.height(), c.width()) {
                return Err(Error::Dataset(format!("pair {name} has mismatched sizes")));
            }
            ds.names.push(name);
            ds.rainy.push(r);
            ds.clean.push(c);
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Holds out the last 20% by sorted name (at least one pair once there are two).
    pub fn split(&self) -> Split {
        let n = self.len();
        let held = if n >= 2 { (n / 5).max(1) } else { 0 };
        Split {
            train: (0..n - held).collect(),
            held_out: (n - held..n).collect(),
        }
    }

    /// Subset in the given order.
    pub fn subset(&self, idx: &[usize]) -> PairedDataset {
        PairedDataset {
            names: idx.iter().map(|&i| self.names[i].clone()).collect(),
            rainy: idx.iter().map(|&i| self.rainy[i].clone()).collect(),
            clean: idx.iter().map(|&i| self.clean[i].clone()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::save_png;

    #[test]
    fn pairs_by_stem_and_reports_orphans() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::filled(8, 8, 0.2);
        for n in ["b", "a"] {
            save_png(&img, dir.path().join("rain").join(format!("{n}.png"))).unwrap();
            save_png(&img, dir.path().join("norain").join(format!("{n}.png"))).unwrap();
        }
        let ds = PairedDataset::load(dir.path()).unwrap();
        assert_eq!(ds.names, ["a", "b"]);
        assert_eq!(
            ds.split(),
            Split {
                train: vec![0],
                held_out: vec![1]
            }
        );

        save_png(&img, dir.path().join("rain").join("orphan.png")).unwrap();
        let err = PairedDataset::load(dir.path()).unwrap_err();
        assert_eq!(err.kind(), "dataset");
        assert!(err.to_string().contains("rain/orphan.png"));
    }

    #[test]
    fn split_sizes() {
        let ds = |n: usize| PairedDataset {
            names: (0..n).map(|i| format!("{i:02}")).collect(),
            rainy: vec![Image::filled(1, 1, 0.0); n],
            clean: vec![Image::filled(1, 1, 0.0); n],
        };
        assert_eq!(ds(25).split().held_out, (20..25).collect::<Vec<_>>());
        assert_eq!(ds(1).split().held_out.len(), 0);
        assert_eq!(ds(9).split().held_out.len(), 1);
    }
}
