use std::path::Path;

use super::emit::{RECORDS_FILE, RECORDS_HEADER};
use crate::error::{Error, Result};

/// Tolerance for comparing a recomputed running mean with the stored one.
const MEAN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub rows: usize,
    pub replicates: usize,
}

struct Group {
    key: (String, String, String),
    t: usize,
    sum: f64,
    min_iregret: f64,
    last_simple: f64,
}

/// Re-checks the per-row regret invariants of a `records.csv` text.
pub fn verify_records_text(text: &str) -> Result<VerifyReport> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().ne(RECORDS_HEADER) {
        return Err(Error::data(format!(
            "unexpected records header: {}",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut groups: Vec<Group> = Vec::new();
    let mut rows = 0;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let num = |col: usize| -> Result<f64> {
            rec[col]
                .parse::<f64>()
                .map_err(|_| Error::data(format!("line {line}: column '{}' is not a number", RECORDS_HEADER[col])))
        };
        let key = (rec[0].to_string(), rec[1].to_string(), rec[2].to_string());
        let t: usize = rec[3]
            .parse()
            .map_err(|_| Error::data(format!("line {line}: column 't' is not an integer")))?;
        let (iregret, avg, simple) = (num(6)?, num(7)?, num(8)?);
        num(5)?;
        let fail = |m: &str| Error::data(format!("line {line} ({} {} rep {} t={t}): {m}", key.0, key.1, key.2));
        if groups.last().is_none_or(|g| g.key != key) {
            if groups.iter().any(|g| g.key == key) {
                return Err(fail("replicate rows are not contiguous"));
            }
            groups.push(Group {
                key: key.clone(),
                t: 0,
                sum: 0.0,
                min_iregret: f64::INFINITY,
                last_simple: f64::INFINITY,
            });
        }
        let g = groups.last_mut().expect("group exists");
        if t != g.t + 1 {
            return Err(fail("steps are not consecutive"));
        }
        if iregret < 0.0 || avg < 0.0 || simple < 0.0 {
            return Err(fail("negative regret"));
        }
        g.t = t;
        g.sum += iregret;
        g.min_iregret = g.min_iregret.min(iregret);
        if (avg - g.sum / t as f64).abs() > MEAN_TOLERANCE * (1.0 + g.sum) {
            return Err(fail("avg_regret is not the running mean of iregret"));
        }
        if simple != g.min_iregret {
            return Err(fail("simple_regret is not the minimum iregret so far"));
        }
        if simple > g.last_simple {
            return Err(fail("simple_regret increased"));
        }
        if simple > avg + MEAN_TOLERANCE {
            return Err(fail("simple_regret exceeds avg_regret"));
        }
        g.last_simple = simple;
        rows += 1;
    }
    if let Some(g) = groups.first() {
        if let Some(bad) = groups.iter().find(|h| h.t != g.t) {
            return Err(Error::data(format!(
                "replicate {} {} {} has {} rows, expected {}",
                bad.key.0, bad.key.1, bad.key.2, bad.t, g.t
            )));
        }
    }
    Ok(VerifyReport {
        rows,
        replicates: groups.len(),
    })
}

/// Verifies `records.csv` in a result directory (or a records file directly).
pub fn verify_results(path: impl AsRef<Path>) -> Result<VerifyReport> {
    let path = path.as_ref();
    let file = if path.is_dir() {
        path.join(RECORDS_FILE)
    } else {
        path.to_path_buf()
    };
    let text =
        std::fs::read_to_string(&file).map_err(|e| Error::data(format!("cannot read {}: {e}", file.display())))?;
    verify_records_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "policy,goal,rep,t,arm_id,y,iregret,avg_regret,simple_regret\n";

    #[test]
    fn accepts_consistent_rows() {
        let text = format!("{HEADER}p,aregret,0,1,a,7,1,1,1\np,aregret,0,2,b,8,0,0.5,0\n");
        assert_eq!(
            verify_records_text(&text).unwrap(),
            VerifyReport { rows: 2, replicates: 1 }
        );
    }

    #[test]
    fn rejects_inconsistencies() {
        for body in [
            "p,aregret,0,2,a,7,1,1,1\n",
            "p,aregret,0,1,a,7,1,0.9,1\n",
            "p,aregret,0,1,a,7,1,1,0.5\n",
            "p,aregret,0,1,a,9,-1,-1,-1\n",
            "p,aregret,0,1,a,7,1,1,1\np,aregret,1,1,a,7,1,1,1\np,aregret,0,2,b,8,0,0.5,0\n",
            "p,aregret,0,1,a,x,1,1,1\n",
        ] {
            assert!(verify_records_text(&format!("{HEADER}{body}")).is_err(), "{body}");
        }
        assert!(verify_records_text("a,b\n1,2\n").is_err());
    }
}
