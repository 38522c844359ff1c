//! Aligned-column text renderings of the evaluation reports.

use std::fmt::Write;

use super::{BenchReport, CvReport, ReidReport};
use crate::knn::Metric;

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(&mut header.iter().copied());
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&mut rule.iter().map(String::as_str));
    for row in rows {
        line(&mut row.iter().map(String::as_str));
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

pub fn reid_table(r: &ReidReport) -> String {
    let rows: Vec<Vec<String>> = r
        .rows
        .iter()
        .map(|row| {
            vec![
                row.method.name().to_string(),
                format!("{:.4}", row.uap),
                format!("{:.4}", row.acc_at_1),
                format!("{:.4}", row.recall_at_p90),
                format!("{:.6}", row.time_s),
                format!("{:.2}", row.fps),
            ]
        })
        .collect();
    let mut out = format!(
        "re-identification: {} items, {} queries, {} pairs, dim {}\n",
        r.n_items, r.n_queries, r.n_pairs, r.dim
    );
    out.push_str(&table(&["Method", "uAP", "Acc@1", "Recall@90%", "time(s)", "FPS"], &rows));
    out
}

pub fn classify_table(r: &CvReport) -> String {
    let mut rows = Vec::new();
    for m in &r.methods {
        let name = match m.metric {
            Metric::Cosine => "Raw",
            Metric::Hamming => "Hash",
        };
        for f in &m.folds {
            rows.push(vec![
                name.to_string(),
                format!("{}", f.fold + 1),
                opt(f.metrics.acc),
                opt(f.metrics.sen),
                opt(f.metrics.spe),
                opt(f.metrics.f1),
            ]);
        }
        rows.push(vec![
            name.to_string(),
            "mean".to_string(),
            opt(m.mean.acc),
            opt(m.mean.sen),
            opt(m.mean.spe),
            opt(m.mean.f1),
        ]);
    }
    let mut out = format!(
        "{}-fold classification: {} items, k={}, positive class {}\n",
        r.config.n_folds, r.plan.n_items, r.config.k, r.config.positive_class
    );
    out.push_str(&table(&["Method", "Fold", "ACC", "SEN", "SPE", "F1"], &rows));
    out
}

pub fn bench_table(r: &BenchReport) -> String {
    let c = &r.config;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "retrieval benchmark: {} records, dim {}, {}-bit codes, {} queries, k={}, {} clusters",
        c.corpus_size, c.dim, c.code_bits, c.n_queries, c.k, r.clusters
    );
    let _ = writeln!(out, "machine: {}", r.machine);
    let rows = vec![
        vec![
            "Raw".to_string(),
            format!("{:.6}", r.raw_scan_s),
            format!("{:.2}", 1.0 / r.raw_scan_s),
        ],
        vec!["Hash".to_string(), format!("{:.6}", r.hash_query_s), format!("{:.2}", r.fps)],
    ];
    out.push_str(&table(&["Method", "time(s)", "FPS"], &rows));
    let _ = writeln!(out, "speedup: {:.1}x (index build {:.3} s)", r.speedup, r.build_s);
    out
}
