//! Brute-force definitions of the retrieval and classification metrics.

use endofinder_core::eval::{classification_metrics, micro_ap, recall_at_p90, ScoredPair};
use endofinder_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_pairs(rng: &mut ChaCha8Rng) -> Vec<ScoredPair> {
    let n = rng.random_range(1..60);
    let levels = rng.random_range(1..8);
    let p_match = rng.random_range(0.05..0.95);
    (0..n)
        .map(|_| ScoredPair {
            query_id: format!("q{}", rng.random_range(0..5)),
            ref_id: format!("r{}", rng.random_range(0..12)),
            score: rng.random_range(0..levels) as f64 / 4.0,
            is_match: rng.random_bool(p_match),
        })
        .collect()
}

/// Position of pair `i` in the global ranking: how many pairs precede it.
pub fn position(pairs: &[ScoredPair], i: usize) -> usize {
    let key = |p: &ScoredPair| (-p.score, p.ref_id.clone(), p.query_id.clone());
    let ki = key(&pairs[i]);
    pairs
        .iter()
        .enumerate()
        .filter(|(j, p)| {
            let kj = key(p);
            kj.0 < ki.0 || (kj.0 == ki.0 && (kj.1.clone(), kj.2.clone()) < (ki.1.clone(), ki.2.clone())) || (kj == ki && *j < i)
        })
        .count()
}

pub fn ranked_matches(pairs: &[ScoredPair]) -> Vec<bool> {
    let mut slots = vec![false; pairs.len()];
    for i in 0..pairs.len() {
        slots[position(pairs, i)] = pairs[i].is_match;
    }
    slots
}

pub fn oracle_ap(pairs: &[ScoredPair]) -> Option<f64> {
    let m = ranked_matches(pairs);
    let total = m.iter().filter(|x| **x).count();
    if total == 0 {
        return None;
    }
    let mut sum = 0.0;
    for (r, _) in m.iter().enumerate().filter(|(_, x)| **x) {
        let hits_so_far = m[..=r].iter().filter(|x| **x).count();
        sum += hits_so_far as f64 / (r + 1) as f64;
    }
    Some(sum / total as f64)
}

pub fn oracle_rp90(pairs: &[ScoredPair]) -> Option<f64> {
    let m = ranked_matches(pairs);
    let total = m.iter().filter(|x| **x).count();
    if total == 0 {
        return None;
    }
    let best = (1..=m.len())
        .map(|cut| m[..cut].iter().filter(|x| **x).count())
        .enumerate()
        .filter(|(i, hits)| 10 * hits >= 9 * (i + 1))
        .map(|(_, hits)| hits)
        .max()
        .unwrap_or(0);
    Some(best as f64 / total as f64)
}


fn compare(case: usize, got: Result<f64, Error>, want: Option<f64>) -> Result<(), String> {
    match (got, want) {
        (Ok(g), Some(w)) if g == w => Ok(()),
        (Err(Error::NoPositives), None) => Ok(()),
        (g, w) => Err(format!("case {case}: {g:?} vs oracle {w:?}")),
    }
}

pub fn micro_ap_cases(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cases).try_for_each(|case| {
        let pairs = random_pairs(&mut rng);
        compare(case, micro_ap(&pairs), oracle_ap(&pairs))
    })
}

pub fn recall_at_p90_cases(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cases).try_for_each(|case| {
        let pairs = random_pairs(&mut rng);
        compare(case, recall_at_p90(&pairs), oracle_rp90(&pairs))
    })
}

/// A ranking given as `+`/`-` marks, best first.
pub fn seq(s: &str) -> Vec<ScoredPair> {
    s.chars()
        .enumerate()
        .map(|(i, c)| ScoredPair {
            query_id: "q".into(),
            ref_id: format!("r{i:02}"),
            score: 100.0 - i as f64,
            is_match: c == '+',
        })
        .collect()
}

pub fn worked_examples() -> Result<(), String> {
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let ap = |s: &str| micro_ap(&seq(s)).map_err(|e| e.to_string());
    let rp = |s: &str| recall_at_p90(&seq(s)).map_err(|e| e.to_string());
    let checks = [
        ("AP ++--", ap("++--")?, 1.0),
        ("AP -+", ap("-+")?, 0.5),
        ("AP +-+", ap("+-+")?, (1.0 + 2.0 / 3.0) / 2.0),
        ("R@P90 +++---", rp("+++---")?, 1.0),
        ("R@P90 ++-", rp("++-")?, 1.0),
        ("R@P90 +-+", rp("+-+")?, 0.5),
    ];
    for (name, got, want) in checks {
        if !close(got, want) {
            return Err(format!("{name}: {got} vs {want}"));
        }
    }
    // TP=3, FN=1, TN=2, FP=2
    let m = classification_metrics(&[2, 2, 2, 1, 1, 1, 2, 2], &[2, 2, 2, 2, 1, 1, 1, 1], 2).map_err(|e| e.to_string())?;
    let ok = (m.tp, m.fn_, m.tn, m.fp) == (3, 1, 2, 2)
        && (m.sen, m.spe, m.acc) == (Some(0.75), Some(0.5), Some(0.625))
        && m.f1.is_some_and(|f| close(f, 2.0 / 3.0));
    if !ok {
        return Err(format!("confusion example: {m:?}"));
    }
    let none = classification_metrics(&[1, 2], &[1, 1], 2).map_err(|e| e.to_string())?;
    if none.sen.is_some() {
        return Err("sensitivity defined without positives".into());
    }
    Ok(())
}

pub fn classification_cases(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let n = rng.random_range(0..40);
        let classes = rng.random_range(1..4u32);
        let truths: Vec<u32> = (0..n).map(|_| rng.random_range(1..=classes)).collect();
        let preds: Vec<u32> = (0..n).map(|_| rng.random_range(1..=classes)).collect();
        let pos = rng.random_range(1..=classes);
        let got = classification_metrics(&preds, &truths, pos).map_err(|e| e.to_string())?;

        let count = |f: &dyn Fn(bool, bool) -> bool| preds.iter().zip(&truths).filter(|(p, t)| f(**p == pos, **t == pos)).count();
        let tp = count(&|p, t| p && t);
        let tn = count(&|p, t| !p && !t);
        let fp = count(&|p, t| p && !t);
        let fn_ = count(&|p, t| !p && t);
        let div = |a: usize, b: usize| if b == 0 { None } else { Some(a as f64 / b as f64) };
        let want = (
            (tp, tn, fp, fn_),
            div(tp + tn, n),
            div(tp, tp + fn_),
            div(tn, tn + fp),
            div(2 * tp, 2 * tp + fp + fn_),
        );
        let have = ((got.tp, got.tn, got.fp, got.fn_), got.acc, got.sen, got.spe, got.f1);
        if have != want {
            return Err(format!("case {case}: {have:?} vs oracle {want:?}"));
        }
    }
    Ok(())
}
