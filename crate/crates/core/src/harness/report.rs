use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::metrics::{write_curves_csv, EvalReport, ImpactClass, TConv};

/// Pointwise mean of the cumulative curves of one approach over all
/// scenarios of one impact class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCurve {
    pub class: ImpactClass,
    pub approach: String,
    pub members: usize,
    pub cum_rmse: Vec<f64>,
    pub cum_mape: Vec<f64>,
}

pub fn aggregate_by_class(reports: &[EvalReport]) -> Vec<ClassCurve> {
    let mut order: Vec<String> = Vec::new();
    let mut acc: BTreeMap<(ImpactClass, usize), ClassCurve> = BTreeMap::new();
    for r in reports {
        for a in &r.approaches {
            let idx = match order.iter().position(|n| *n == a.approach) {
                Some(i) => i,
                None => {
                    order.push(a.approach.clone());
                    order.len() - 1
                }
            };
            let e = acc.entry((r.impact.class, idx)).or_insert_with(|| ClassCurve {
                class: r.impact.class,
                approach: a.approach.clone(),
                members: 0,
                cum_rmse: vec![0.0; a.cum_rmse.len()],
                cum_mape: vec![0.0; a.cum_mape.len()],
            });
            e.members += 1;
            let n = e.cum_rmse.len().min(a.cum_rmse.len());
            e.cum_rmse.truncate(n);
            e.cum_mape.truncate(n);
            for t in 0..n {
                e.cum_rmse[t] += a.cum_rmse[t];
                e.cum_mape[t] += a.cum_mape[t];
            }
        }
    }
    acc.into_values()
        .map(|mut c| {
            let k = c.members as f64;
            c.cum_rmse.iter_mut().for_each(|v| *v /= k);
            c.cum_mape.iter_mut().for_each(|v| *v /= k);
            c
        })
        .collect()
}

/// One TConv table row: th, x, approach and a cell per scenario.
pub type TConvRow = (f64, usize, String, Vec<Option<TConv>>);

/// Rows ordered by threshold then approach; one column per scenario.
pub fn tconv_table(reports: &[EvalReport]) -> (Vec<String>, Vec<TConvRow>) {
    let columns: Vec<String> = reports.iter().map(|r| r.scenario.clone()).collect();
    let mut keys: Vec<(f64, usize)> = Vec::new();
    let mut approaches: Vec<String> = Vec::new();
    for r in reports {
        for a in &r.approaches {
            if !approaches.contains(&a.approach) {
                approaches.push(a.approach.clone());
            }
            for e in &a.tconv {
                if !keys.contains(&(e.th, e.x)) {
                    keys.push((e.th, e.x));
                }
            }
        }
    }
    keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut rows = Vec::new();
    for &(th, x) in &keys {
        for name in &approaches {
            let cells = reports
                .iter()
                .map(|r| {
                    r.approach(name).and_then(|a| a.tconv.iter().find(|e| e.th == th && e.x == x)).map(|e| e.tconv)
                })
                .collect();
            rows.push((th, x, name.clone(), cells));
        }
    }
    (columns, rows)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, HarnessError> {
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| HarnessError::io(path, e))?))
}

/// Writes per-scenario curve CSVs, class-aggregate curves, the TConv table
/// and a scenario summary into `dir`.
pub fn emit_report(reports: &[EvalReport], dir: &Path) -> Result<(), HarnessError> {
    if reports.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    let curves = dir.join("curves");
    fs::create_dir_all(&curves).map_err(|e| HarnessError::io(&curves, e))?;

    for r in reports {
        let path = curves.join(format!("{}.csv", r.scenario));
        let mut w = create(&path)?;
        write_curves_csv(&r.approaches, &mut w).and_then(|_| w.flush()).map_err(|e| HarnessError::io(&path, e))?;
    }

    let path = dir.join("aggregate_curves.csv");
    let mut w = create(&path)?;
    let body = |w: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        writeln!(w, "class,approach,members,step,cum_rmse,cum_mape")?;
        for c in aggregate_by_class(reports) {
            for (t, (r, m)) in c.cum_rmse.iter().zip(&c.cum_mape).enumerate() {
                writeln!(w, "{},{},{},{},{},{}", c.class, c.approach, c.members, t, r, m)?;
            }
        }
        w.flush()
    };
    body(&mut w).map_err(|e| HarnessError::io(&path, e))?;

    let path = dir.join("tconv_table.csv");
    let mut w = create(&path)?;
    let (columns, rows) = tconv_table(reports);
    let body = |w: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        writeln!(w, "th,x,approach,{}", columns.join(","))?;
        for (th, x, name, cells) in &rows {
            let cells: Vec<String> =
                cells.iter().map(|c| c.map(|t| t.to_string()).unwrap_or_else(|| "missing".into())).collect();
            writeln!(w, "{th},{x},{name},{}", cells.join(","))?;
        }
        w.flush()
    };
    body(&mut w).map_err(|e| HarnessError::io(&path, e))?;

    let path = dir.join("scenarios.csv");
    let mut w = create(&path)?;
    let body = |w: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        writeln!(w, "scenario,failed_link,inspected_link,class,pre_mean,post_mean,relative_change,stream_hash")?;
        for r in reports {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.scenario,
                r.failed_link,
                r.inspected_link,
                r.impact.class,
                r.impact.pre_mean,
                r.impact.post_mean,
                r.impact.relative_change,
                r.stream_hash
            )?;
        }
        w.flush()
    };
    body(&mut w).map_err(|e| HarnessError::io(&path, e))?;
    Ok(())
}

/// Loads every `report.json` found in the subdirectories of `dir` (or of
/// `dir/scenarios`), ordered by directory name.
pub fn read_reports(dir: &Path) -> Result<Vec<EvalReport>, HarnessError> {
    let root = if dir.join("scenarios").is_dir() { dir.join("scenarios") } else { dir.to_path_buf() };
    let mut entries: Vec<_> = fs::read_dir(&root)
        .map_err(|e| HarnessError::io(&root, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path().join("report.json"))
        .filter(|p| p.is_file())
        .collect();
    entries.sort();
    entries
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))
        })
        .collect()
}
