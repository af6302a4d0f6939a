//! Confusion matrices, accuracy and their CSV/SVG exports.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::locmap::ramp;

/// Rows are true classes, columns predicted classes, both in `labels` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub labels: Vec<u32>,
    pub counts: Vec<Vec<u64>>,
}

pub fn confusion(truth: &[u32], predicted: &[u32], labels: &[u32]) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut pos = HashMap::with_capacity(labels.len());
    for (i, &l) in labels.iter().enumerate() {
        if pos.insert(l, i).is_some() {
            return Err(Error::Validation(format!("label {l} listed twice")));
        }
    }
    let find = |l: u32| {
        pos.get(&l)
            .copied()
            .ok_or_else(|| Error::Domain(format!("label {l} is not among the classes")))
    };
    let n = labels.len();
    let mut counts = vec![vec![0u64; n]; n];
    for (&t, &p) in truth.iter().zip(predicted) {
        counts[find(t)?][find(p)?] += 1;
    }
    Ok(ConfusionMatrix {
        labels: labels.to_vec(),
        counts,
    })
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Domain("accuracy of an empty confusion matrix".into()));
    }
    let trace: u64 = (0..cm.labels.len()).map(|i| cm.counts[i][i]).sum();
    Ok(trace as f64 / total as f64)
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Regroups classes through `group_of`, summing cells.
    pub fn grouped(&self, groups: &[u32], group_of: impl Fn(u32) -> u32) -> Result<Self> {
        let mut out = ConfusionMatrix {
            labels: groups.to_vec(),
            counts: vec![vec![0; groups.len()]; groups.len()],
        };
        let idx = |l: u32| {
            groups
                .iter()
                .position(|&g| g == group_of(l))
                .ok_or_else(|| Error::Domain(format!("label {l} maps to no group")))
        };
        for (i, row) in self.counts.iter().enumerate() {
            let gi = idx(self.labels[i])?;
            for (j, &c) in row.iter().enumerate() {
                out.counts[gi][idx(self.labels[j])?] += c;
            }
        }
        Ok(out)
    }

    /// `label,<labels...>` then one `<true>,<counts...>` row per class; LF endings.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("label");
        for l in &self.labels {
            let _ = write!(s, ",{l}");
        }
        s.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            let _ = write!(s, "{l}");
            for c in row {
                let _ = write!(s, ",{c}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty CSV")?;
        let mut head = header.split(',');
        if head.next() != Some("label") {
            return Err("header must start with `label`".into());
        }
        let labels = head
            .map(|f| f.parse::<u32>().map_err(|e| format!("bad label {f:?}: {e}")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let mut counts = Vec::with_capacity(labels.len());
        for (i, line) in lines.enumerate() {
            if i >= labels.len() {
                if line.is_empty() {
                    continue;
                }
                return Err(format!("extra row {line:?}"));
            }
            let mut fields = line.split(',');
            let row_label = fields.next().unwrap_or("");
            if row_label.parse::<u32>().ok() != Some(labels[i]) {
                return Err(format!("row {} labelled {row_label:?}, expected {}", i + 1, labels[i]));
            }
            let row = fields
                .map(|f| f.parse::<u64>().map_err(|e| format!("bad count {f:?}: {e}")))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            if row.len() != labels.len() {
                return Err(format!("row {} has {} counts", i + 1, row.len()));
            }
            counts.push(row);
        }
        if counts.len() != labels.len() {
            return Err(format!("{} rows for {} labels", counts.len(), labels.len()));
        }
        Ok(Self { labels, counts })
    }

    /// Row-normalized heatmap with the raw count printed in each cell.
    pub fn to_svg(&self) -> String {
        let n = self.labels.len();
        let cell = if n > 20 { 14 } else { 40 };
        let margin = 40;
        let side = margin + n * cell;
        let font = if n > 20 { 6 } else { 11 };
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{side}" height="{side}" viewBox="0 0 {side} {side}" font-family="sans-serif">"#
        );
        for (k, l) in self.labels.iter().enumerate() {
            let mid = margin + k * cell + cell / 2;
            let _ = writeln!(
                s,
                r#"<text x="{mid}" y="{}" font-size="{font}" text-anchor="middle">{l}</text>"#,
                margin - 6
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" font-size="{font}" text-anchor="end">{l}</text>"#,
                margin - 4,
                mid + font / 2
            );
        }
        for (i, row) in self.counts.iter().enumerate() {
            let sum: u64 = row.iter().sum();
            for (j, &c) in row.iter().enumerate() {
                let f = if sum == 0 { 0.0 } else { c as f64 / sum as f64 };
                let (x, y) = (margin + j * cell, margin + i * cell);
                let _ = writeln!(
                    s,
                    r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{}"><title>{c}</title></rect>"#,
                    ramp(f)
                );
                if c > 0 {
                    let _ = writeln!(
                        s,
                        r#"<text x="{}" y="{}" font-size="{font}" text-anchor="middle">{c}</text>"#,
                        x + cell / 2,
                        y + cell / 2 + font / 2
                    );
                }
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

/// Writes `<prefix>.csv` and `<prefix>.svg`.
pub fn emit_reports(cm: &ConfusionMatrix, prefix: &Path) -> Result<(PathBuf, PathBuf)> {
    let csv = with_suffix(prefix, ".csv");
    let svg = with_suffix(prefix, ".svg");
    std::fs::write(&csv, cm.to_csv()).map_err(|e| Error::io(&csv, e))?;
    std::fs::write(&svg, cm.to_svg()).map_err(|e| Error::io(&svg, e))?;
    Ok((csv, svg))
}

pub fn load_csv(path: &Path) -> Result<ConfusionMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ConfusionMatrix::from_csv(&text).map_err(|m| Error::format(path, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mcs_labels() -> Vec<u32> {
        (8..=16).collect()
    }

    #[test]
    fn hand_counted_cells() {
        let cm = confusion(&[8, 8], &[8, 9], &mcs_labels()).unwrap();
        assert_eq!(cm.counts[0][0], 1);
        assert_eq!(cm.counts[0][1], 1);
        assert_eq!(cm.total(), 2);
        assert_eq!(accuracy(&cm).unwrap(), 0.5);
    }

    #[test]
    fn empty_and_unknown() {
        let cm = confusion(&[], &[], &mcs_labels()).unwrap();
        assert_eq!(cm.total(), 0);
        assert!(matches!(accuracy(&cm), Err(Error::Domain(_))));
        assert!(matches!(confusion(&[8], &[17], &mcs_labels()), Err(Error::Domain(_))));
    }

    #[test]
    fn two_by_two_half() {
        let cm = ConfusionMatrix {
            labels: vec![0, 1],
            counts: vec![vec![1, 1], vec![1, 1]],
        };
        assert_eq!(accuracy(&cm).unwrap(), 0.5);
    }

    #[test]
    fn csv_layout_and_round_trip() {
        let cm = confusion(&[8, 9, 16, 16], &[8, 16, 16, 9], &mcs_labels()).unwrap();
        let csv = cm.to_csv();
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows.len(), 10);
        assert!(rows.iter().all(|r| r.split(',').count() == 10));
        assert_eq!(rows[0], "label,8,9,10,11,12,13,14,15,16");
        assert!(!csv.contains('\r'));
        assert_eq!(ConfusionMatrix::from_csv(&csv).unwrap(), cm);
    }

    #[test]
    fn svg_has_one_rect_per_cell() {
        let labels: Vec<u32> = (0..54).collect();
        let cm = confusion(&[0, 5, 53], &[0, 6, 53], &labels).unwrap();
        assert_eq!(cm.to_svg().matches("<rect").count(), 54 * 54);
    }

    #[test]
    fn emits_files() {
        let dir = tempfile::tempdir().unwrap();
        let cm = confusion(&[8, 9], &[8, 9], &mcs_labels()).unwrap();
        let (csv, svg) = emit_reports(&cm, &dir.path().join("mcs_confusion")).unwrap();
        assert!(csv.ends_with("mcs_confusion.csv") && svg.exists());
        assert_eq!(load_csv(&csv).unwrap(), cm);
    }

    #[test]
    fn grouping_sums_cells() {
        let cm = confusion(&[8, 9, 12, 12], &[9, 12, 11, 8], &mcs_labels()).unwrap();
        let g = cm.grouped(&[0, 1], |l| u32::from(l > 10)).unwrap();
        assert_eq!(g.counts, vec![vec![1, 1], vec![1, 1]]);
    }
}
