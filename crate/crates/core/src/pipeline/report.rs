use std::path::Path;

use super::arms::{ArmResult, Status};
use super::plan::{relative_improvement, ImprovementBase};
use crate::error::Result;

pub const MASTER_COLUMNS: [&str; 12] = [
    "arm",
    "kind",
    "alpha1",
    "alpha2",
    "reduction",
    "arch",
    "fused",
    "status",
    "train_psnr",
    "train_ssim",
    "test_psnr",
    "test_ssim",
];

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

/// One row per arm and per fusion pair. Values are written at full
/// precision so that the improvement table can be recomputed from them.
pub fn write_master_csv(rows: &[ArmResult], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(MASTER_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.name.clone(),
            r.kind.clone(),
            format!("{:.2}", r.alpha[0]),
            format!("{:.2}", r.alpha[1]),
            r.reduction.clone(),
            r.arch.clone(),
            if r.fused { "yes" } else { "no" }.into(),
            r.status.label(),
            cell(r.train.map(|s| s.psnr)),
            cell(r.train.map(|s| s.ssim)),
            cell(r.test.map(|s| s.psnr)),
            cell(r.test.map(|s| s.ssim)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Percentage changes of every completed row against `reference`, by metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Improvement {
    pub name: String,
    pub fused: bool,
    /// Train PSNR, train SSIM, test PSNR, test SSIM.
    pub percent: [f64; 4],
}

fn metrics(r: &ArmResult) -> Option<[f64; 4]> {
    match (r.status == Status::Ok, r.train, r.test) {
        (true, Some(a), Some(b)) => Some([a.psnr, a.ssim, b.psnr, b.ssim]),
        _ => None,
    }
}

pub fn improvements(rows: &[ArmResult], reference: &ArmResult, base: ImprovementBase) -> Vec<Improvement> {
    let Some(r) = metrics(reference) else {
        return Vec::new();
    };
    rows.iter()
        .filter_map(|row| {
            let v = metrics(row)?;
            Some(Improvement {
                name: row.name.clone(),
                fused: row.fused,
                percent: std::array::from_fn(|i| relative_improvement(v[i], r[i], base)),
            })
        })
        .collect()
}

/// Percentages rounded to one decimal, as in published tables.
pub fn write_improvements_csv(
    rows: &[Improvement],
    reference: &str,
    base: ImprovementBase,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record([
        "arm",
        "fused",
        "reference",
        "base",
        "train_psnr_pct",
        "train_ssim_pct",
        "test_psnr_pct",
        "test_ssim_pct",
    ])?;
    let base = match base {
        ImprovementBase::Larger => "larger",
        ImprovementBase::Reference => "reference",
    };
    for r in rows {
        let mut rec = vec![
            r.name.clone(),
            if r.fused { "yes" } else { "no" }.to_string(),
            reference.to_string(),
            base.to_string(),
        ];
        // Adding 0.0 turns a rounded -0.0 into 0.0.
        rec.extend(r.percent.iter().map(|p| format!("{:.1}", p + 0.0)));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::arms::SplitScores;

    fn row(name: &str, test_psnr: f64) -> ArmResult {
        ArmResult {
            name: name.into(),
            kind: "gfrsn".into(),
            alpha: [1.0, 1.0],
            reduction: "fmf".into(),
            arch: "g2".into(),
            fused: false,
            status: Status::Ok,
            train: Some(SplitScores { psnr: 20.0, ssim: 0.5 }),
            test: Some(SplitScores { psnr: test_psnr, ssim: 0.5 }),
        }
    }

    #[test]
    fn published_row_rounds_to_one_point_four() {
        let rows = [row("ref", 19.24235), row("best", 19.52272)];
        let imp = improvements(&rows, &rows[0], ImprovementBase::Larger);
        assert_eq!(imp[0].percent, [0.0; 4]);
        assert_eq!(format!("{:.1}", imp[1].percent[2]), "1.4");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("imp.csv");
        write_improvements_csv(&imp, "ref", ImprovementBase::Larger, &p).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.contains("best,no,ref,larger,0.0,0.0,1.4,0.0"), "{text}");
    }

    #[test]
    fn failed_rows_are_left_out() {
        let mut bad = row("bad", 1.0);
        bad.status = Status::Failed("nan".into());
        bad.train = None;
        bad.test = None;
        let rows = [row("ref", 19.0), bad];
        assert_eq!(improvements(&rows, &rows[0], ImprovementBase::Reference).len(), 1);
        assert!(improvements(&rows, &rows[1], ImprovementBase::Reference).is_empty());
    }

    #[test]
    fn master_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let mut fused = row("a+b@0.5", 19.0);
        fused.fused = true;
        write_master_csv(&[row("a", 18.5), fused], &p).unwrap();
        let mut r = csv::Reader::from_path(&p).unwrap();
        assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), MASTER_COLUMNS);
        let recs: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
        assert_eq!(recs.len(), 2);
        assert_eq!(&recs[1][6], "yes");
        assert_eq!(recs[0][10].parse::<f64>().unwrap(), 18.5);
    }
}
