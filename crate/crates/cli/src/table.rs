use std::path::Path;

use msgnn::error::Error;

use crate::{CliError, Result};

/// Rows of pre-formatted cells; the text and CSV renderings share the
/// same strings so both carry identical numbers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn psnr_cell(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        format!("{v:.3}")
    }
}

pub fn ssim_cell(v: f64) -> String {
    format!("{v:.4}")
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Table {
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    /// First column left-aligned, the rest right-aligned.
    pub fn to_text(&self) -> String {
        let widths: Vec<usize> = (0..self.headers.len())
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r[c].len())
                    .chain([self.headers[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            parts.join("  ").trim_end().to_string()
        };
        let mut out = line(&self.headers);
        out.push('\n');
        out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1)));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let csv_err = |source| CliError::Csv {
            path: "<memory>".into(),
            source,
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| csv_err(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("cells are utf-8"))
    }

    /// Writes `<stem>.txt` and `<stem>.csv`.
    pub fn write(&self, stem: &Path) -> Result<()> {
        if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: dir.into(),
                source: e,
            })?;
        }
        for (ext, body) in [("txt", self.to_text()), ("csv", self.to_csv()?)] {
            let path = stem.with_extension(ext);
            std::fs::write(&path, body).map_err(|e| Error::Io { path, source: e })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_and_csv_share_cells() {
        let mut t = Table::new(&["name", "psnr", "ssim"]);
        t.push(vec!["a".into(), psnr_cell(31.23456), ssim_cell(0.912345)]);
        t.push(vec!["longer".into(), psnr_cell(f64::INFINITY), ssim_cell(1.0)]);
        let text = t.to_text();
        assert!(text.contains("31.235") && text.contains("0.9123") && text.contains("inf"));
        assert_eq!(
            t.to_csv().unwrap(),
            "name,psnr,ssim\na,31.235,0.9123\nlonger,inf,1.0000\n"
        );
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[2].len(), lines[3].len());
    }
}
