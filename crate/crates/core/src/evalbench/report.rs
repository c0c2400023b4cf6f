use std::fmt::Write;

use super::{BenchmarkKind, EvalData, EvalOutcome, EvalReport, EvalTask, RowKind};

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.4}"))
}

/// Wide table: one line per model, one column per feature set, pooled
/// relative RMSE in the cells; benchmark lines carry RMSE in `rmse`.
pub fn regression_table_csv(report: &EvalReport) -> String {
    let mut feature_sets: Vec<&str> = Vec::new();
    let mut models: Vec<&str> = Vec::new();
    for r in report.model_rows() {
        let fs = r.feature_set.as_deref().unwrap_or("");
        if !feature_sets.contains(&fs) {
            feature_sets.push(fs);
        }
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let mut out = format!("model,{},rmse\n", feature_sets.join(","));
    for m in &models {
        let cells: Vec<String> = feature_sets
            .iter()
            .map(|fs| {
                cell(
                    report
                        .model_rows()
                        .find(|r| r.model == *m && r.feature_set.as_deref() == Some(fs))
                        .and_then(|r| r.pooled.relative_rmse),
                )
            })
            .collect();
        let _ = writeln!(out, "{m},{},", cells.join(","));
    }
    for kind in BenchmarkKind::ALL {
        if let Some(b) = report.benchmark(kind) {
            let rel = cell(b.pooled.relative_rmse);
            let cells = vec![rel; feature_sets.len()];
            let _ = writeln!(out, "{kind},{},{}", cells.join(","), cell(b.pooled.rmse));
        }
    }
    out
}

/// One line per interval: best model by pooled F1 and the B3 benchmark.
pub fn interval_table_csv(report: &EvalReport) -> String {
    let mut out = String::from(
        "interval,model,feature_set,precision,recall,f1,benchmark_precision,benchmark_recall,benchmark_f1\n",
    );
    let bench = report.benchmark(BenchmarkKind::B3);
    let best = report.best_f1_per_bound();
    for (i, &bound) in report.bounds.iter().enumerate() {
        let (model, fs, p, r, f) = match best.get(i) {
            Some((row, m)) => (
                row.model.as_str(),
                row.feature_set.as_deref().unwrap_or(""),
                Some(m.precision),
                Some(m.recall),
                Some(m.f1),
            ),
            None => ("", "", None, None, None),
        };
        let b = bench.and_then(|b| b.pooled.intervals.get(i));
        let _ = writeln!(
            out,
            "0-{bound}h,{model},{fs},{},{},{},{},{},{}",
            cell(p),
            cell(r),
            cell(f),
            cell(b.map(|m| m.precision)),
            cell(b.map(|m| m.recall)),
            cell(b.map(|m| m.f1)),
        );
    }
    out
}

/// Long table of every row's pooled and per-fold metrics.
pub fn summary_csv(report: &EvalReport) -> String {
    let mut out = String::new();
    let regression = report.task != EvalTask::IntervalClassification;
    if regression {
        out.push_str("kind,model,feature_set,fold,rmse,relative_rmse\n");
    } else {
        out.push_str("kind,model,feature_set,fold,bound,precision,recall,f1\n");
    }
    for r in &report.rows {
        let kind = match r.kind {
            RowKind::Model => "model",
            RowKind::Benchmark => "benchmark",
        };
        let fs = r.feature_set.as_deref().unwrap_or("");
        let all = std::iter::once(("pooled".to_string(), &r.pooled))
            .chain(r.folds.iter().enumerate().map(|(i, m)| (i.to_string(), m)));
        for (fold, m) in all {
            if regression {
                let _ = writeln!(
                    out,
                    "{kind},{},{fs},{fold},{},{}",
                    r.model,
                    cell(m.rmse),
                    cell(m.relative_rmse)
                );
            } else {
                for iv in &m.intervals {
                    let _ = writeln!(
                        out,
                        "{kind},{},{fs},{fold},{},{:.4},{:.4},{:.4}",
                        r.model, iv.bound, iv.precision, iv.recall, iv.f1
                    );
                }
            }
        }
    }
    out
}

/// Per-run plot data: truth, the best model's prediction and the benchmarks.
/// For classification the best model is chosen per bound and rows repeat per bound.
pub fn plot_csv(outcome: &EvalOutcome, data: &EvalData<'_>) -> String {
    let report = &outcome.report;
    let t = &outcome.predictions;
    let bench_idx: Vec<usize> = BenchmarkKind::ALL
        .iter()
        .map(|k| {
            report
                .rows
                .iter()
                .position(|r| r.kind == RowKind::Benchmark && r.model == k.to_string())
                .expect("benchmark rows present")
        })
        .collect();
    let run_id = |i: usize| &data.labeled[data.rows[t.rows[i]].labeled].run_id;
    let seg_id = |i: usize| &data.segments[data.rows[t.rows[i]].segment].segment_id;
    let mut out = String::new();
    if report.task != EvalTask::IntervalClassification {
        let best = report
            .rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.kind == RowKind::Model)
            .min_by(|a, b| {
                let x = a.1.pooled.rmse.unwrap_or(f64::INFINITY);
                let y = b.1.pooled.rmse.unwrap_or(f64::INFINITY);
                x.total_cmp(&y)
            })
            .map(|(i, _)| i);
        out.push_str("run_index,run_id,segment_id,fold,truth,prediction,b1,b2,b3\n");
        for i in 0..t.rows.len() {
            let pred = best.map(|b| t.values[b][i]);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                i,
                run_id(i),
                seg_id(i),
                t.folds[i],
                t.truth[i],
                pred.map_or_else(String::new, |v| v.to_string()),
                t.values[bench_idx[0]][i],
                t.values[bench_idx[1]][i],
                t.values[bench_idx[2]][i],
            );
        }
        return out;
    }
    let best = report.best_f1_per_bound();
    let index_of = |row: &super::ReportRow| {
        report
            .rows
            .iter()
            .position(|r| std::ptr::eq(r, row))
            .expect("row belongs to report")
    };
    out.push_str("run_index,run_id,segment_id,fold,ttf,bound,truth,prediction,b3\n");
    for (b, &bound) in report.bounds.iter().enumerate() {
        let model = best.get(b).map(|(r, _)| index_of(r));
        for i in 0..t.rows.len() {
            let row = &data.rows[t.rows[i]];
            let truth = row.ttf <= bound;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                i,
                run_id(i),
                seg_id(i),
                t.folds[i],
                row.ttf,
                bound,
                truth,
                model.map_or_else(String::new, |m| t.labels[m][b][i].to_string()),
                t.labels[bench_idx[2]][b][i],
            );
        }
    }
    out
}
