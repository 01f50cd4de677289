//! Acceptance gate. Prints one PASS/FAIL/SKIP line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Set `EGO_IDB_CSV` to a wide pyramid CSV to run the data-dependent checks.

use std::time::{Duration, Instant};

use ego_core::indexes::{mu_index, sex_split, sum_constancy, IndexConfig, IndexPoles};
use ego_core::pyramids::{
    self, combined_cohorts, exponential_model, sex_slice, uniform_model, Sex,
};
use ego_core::report::{linear_fit, spearman};
use ego_core::{
    analytic_oracle_k, batch_compare, batch_compare_sequential, bipartition, compare,
    pair_max_oracle, EgoConfig, Error, EtsmConfig, ObjectRecord, SimilarityMatrix,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// K·Δ constancy
const CONSTANCY_PAIRS: usize = 20;
const CONSTANCY_REL_TOL: f64 = 1e-6;
const INTEGER_K_REL_TOL: f64 = 1e-3;
const CONSTANCY_BUDGET: Duration = Duration::from_secs(1);
// additivity
const ADDITIVITY_PAIRS: usize = 100;
const ADDITIVITY_REL_TOL: f64 = 1e-12;
// ETSM oracle
const ORACLE_MATRICES: usize = 1000;
const ORACLE_MIN_GAP: f64 = 1e-3;
// analytic oracle
const ANALYTIC_PAIRS: usize = 100;
const ANALYTIC_REL_TOL: f64 = 1e-6;
// MU
const MU_SUM_TOL: f64 = 1e-12;
const MU_SAMPLES: usize = 1000;
const MU_POLE_PAIRS: usize = 10;
// model pyramids
const MODEL_TOL: f64 = 0.01;
// dominance
const DOMINANCE_TRIPLES: usize = 1000;
// open mode
const BATCH_SIZE: usize = 200;
// performance
const COMPARE_BUDGET: Duration = Duration::from_millis(10);
const COMPARE_REPEATS: usize = 20;
const BATCH_TARGETS: usize = 220;
const BATCH_BUDGET: Duration = Duration::from_secs(5);
// optional data-dependent checks
const DATA_ENV: &str = "EGO_IDB_CSV";
const SPEARMAN_MIN: f64 = 0.9;
const PUBLISHED_SEX_SLOPE: f64 = 1.025;
const SEX_SLOPE_TOL: f64 = 0.15;
const SUM_REL_SD_MAX: f64 = 0.05;

const DELTAS: [f64; 7] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7];

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn random_object(rng: &mut ChaCha8Rng, name: &str, params: &[String]) -> ObjectRecord {
    ObjectRecord::new(
        name,
        params
            .iter()
            .map(|p| (p.clone(), rng.gen_range(0.05..10.0))),
    )
    .unwrap()
}

fn random_pyramid(rng: &mut ChaCha8Rng, name: &str) -> ObjectRecord {
    // decaying base with noise, the shape of real age structures
    let rate: f64 = rng.gen_range(0.0..0.4);
    let shares: Vec<f64> = (0..pyramids::PARAMS)
        .map(|i| (1.0 - rate).powi((i % pyramids::COHORTS) as i32) * rng.gen_range(0.7..1.3))
        .collect();
    pyramids::pyramid(name, &shares).unwrap()
}

fn param_names(p: usize) -> Vec<String> {
    (0..p).map(|i| format!("p{i:02}")).collect()
}

fn k_delta_constancy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = param_names(34);
    let start = Instant::now();
    let mut worst_ratio = 0.0f64;
    let mut worst_integer = 0.0f64;
    for i in 0..CONSTANCY_PAIRS {
        let q = random_object(&mut rng, &format!("Q{i}"), &params);
        let t = random_object(&mut rng, &format!("T{i}"), &params);
        let mut ratios = Vec::new();
        for &delta in &DELTAS {
            let r = match compare(&q, &t, &EgoConfig::with_delta(delta)) {
                Ok(r) => r,
                Err(e) => return Outcome::Fail(format!("pair {i} delta {delta}: {e}")),
            };
            ratios.push(r.k_cont / (1.0 + delta));
            if delta <= 1e-4 {
                worst_integer = worst_integer.max(rel(r.d as f64 * delta, r.k_cont));
            }
        }
        let base = ratios[ratios.len() - 1];
        for r in &ratios {
            worst_ratio = worst_ratio.max(rel(*r, base));
        }
    }
    let elapsed = start.elapsed();
    check(
        worst_ratio <= CONSTANCY_REL_TOL
            && worst_integer <= INTEGER_K_REL_TOL
            && elapsed < CONSTANCY_BUDGET,
        format!(
            "max rel spread of K_cont/(1+delta) {worst_ratio:.2e} (tol {CONSTANCY_REL_TOL:e}), \
             max rel |D*delta - K_cont| {worst_integer:.2e} (tol {INTEGER_K_REL_TOL:e}), \
             {elapsed:?} (budget {CONSTANCY_BUDGET:?})"
        ),
    )
}

fn additivity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = EgoConfig::default();
    let mut worst_sum = 0.0f64;
    let mut worst_sex = 0.0f64;
    for i in 0..ADDITIVITY_PAIRS {
        let q = random_pyramid(&mut rng, &format!("Q{i}"));
        let t = random_pyramid(&mut rng, &format!("T{i}"));
        let r = compare(&q, &t, &cfg).unwrap();
        let total: f64 = r.increments.iter().map(|(_, k)| k).sum();
        worst_sum = worst_sum.max((total - r.k_cont).abs() / r.k_cont);
        let (m, f) = sex_split(&r).unwrap();
        worst_sex = worst_sex.max((m + f - r.k_cont).abs() / r.k_cont);
    }
    check(
        worst_sum <= ADDITIVITY_REL_TOL && worst_sex <= ADDITIVITY_REL_TOL,
        format!(
            "max rel |sum increments - K_cont| {worst_sum:.2e}, sex split {worst_sex:.2e} (tol {ADDITIVITY_REL_TOL:e})"
        ),
    )
}

fn three(s01: f64, s02: f64, s12: f64) -> SimilarityMatrix {
    SimilarityMatrix::from_similarities(
        vec!["a".into(), "b".into(), "c".into()],
        &[
            vec![1.0, s01, s02],
            vec![s01, 1.0, s12],
            vec![s02, s12, 1.0],
        ],
    )
    .unwrap()
}

fn etsm_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = EtsmConfig::default();
    let mut agree = 0;
    let mut tried = 0;
    while tried < ORACLE_MATRICES {
        let s: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
        let mut sorted = s;
        sorted.sort_by(f64::total_cmp);
        if sorted[1] - sorted[0] <= ORACLE_MIN_GAP || sorted[2] - sorted[1] <= ORACLE_MIN_GAP {
            continue;
        }
        tried += 1;
        let m = three(s[0], s[1], s[2]);
        if let (Ok(a), Ok(b)) = (bipartition(&m, &cfg), pair_max_oracle(&m)) {
            if a.same_split(&b) {
                agree += 1;
            }
        }
    }
    let ties = [
        three(0.7, 0.7, 0.3),
        three(0.4, 0.9, 0.9),
        three(0.5, 0.5, 0.5),
        three(1.0, 1.0, 1.0),
    ];
    let ties_ok = ties
        .iter()
        .filter(|m| matches!(bipartition(m, &cfg), Err(Error::DegenerateSymmetry)))
        .count();
    check(
        agree == ORACLE_MATRICES && ties_ok == ties.len(),
        format!(
            "{agree}/{ORACLE_MATRICES} random matrices match the pair-max oracle, \
             {ties_ok}/{} ties raise DegenerateSymmetry",
            ties.len()
        ),
    )
}

fn analytic_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = EgoConfig::default();
    let mut worst = 0.0f64;
    let mut n = 0;
    for p in [2usize, 10, 34] {
        let params = param_names(p);
        let count = ANALYTIC_PAIRS / 3 + usize::from(p == 34);
        for i in 0..count {
            let q = random_object(&mut rng, &format!("Q{i}"), &params);
            let t = random_object(&mut rng, &format!("T{i}"), &params);
            let k = compare(&q, &t, &cfg).unwrap().k_cont;
            worst = worst.max(rel(k, analytic_oracle_k(&q, &t, &cfg).unwrap()));
            n += 1;
        }
    }
    check(
        worst <= ANALYTIC_REL_TOL && n == ANALYTIC_PAIRS,
        format!("{n} pairs, max rel deviation {worst:.2e} (tol {ANALYTIC_REL_TOL:e})"),
    )
}

fn self_comparison() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let q = random_pyramid(&mut rng, "Q");
    let mut bad = Vec::new();
    for delta in [1e-1, 1e-4, 1e-7] {
        for target in [q.clone(), q.renamed("copy")] {
            match compare(&q, &target, &EgoConfig::with_delta(delta)) {
                Ok(r) if r.d == 1 && r.k_cont == 0.0 => {}
                Ok(r) => bad.push(format!("delta {delta}: D={} K_cont={}", r.d, r.k_cont)),
                Err(e) => bad.push(format!("delta {delta}: {e}")),
            }
        }
    }
    check(
        bad.is_empty(),
        if bad.is_empty() {
            "D = 1, K_cont = 0 at delta 1e-1, 1e-4, 1e-7".into()
        } else {
            bad.join("; ")
        },
    )
}

fn model_pyramids() -> Outcome {
    let e30 = combined_cohorts(&exponential_model(0.30).unwrap()).unwrap();
    let first_two_ok = (e30[0] - 30.07).abs() <= MODEL_TOL && (e30[1] - 21.05).abs() <= MODEL_TOL;
    let uniform = uniform_model();
    let uniform_ok = uniform.values().iter().all(|&v| v == 100.0 / 34.0);
    let e0_ok = exponential_model(0.0).unwrap().values() == uniform.values();
    check(
        first_two_ok && uniform_ok && e0_ok,
        format!(
            "E30 combined cohorts {:.4} and {:.4} (tol {MODEL_TOL}), uniform shares exact: {uniform_ok}, \
             rate 0 equals uniform: {e0_ok}",
            e30[0], e30[1]
        ),
    )
}

fn mu_bounds_and_polarity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut bounds_ok = true;
    let mut worst_sum = 0.0f64;
    for _ in 0..MU_SAMPLES {
        let a: f64 = rng.gen_range(0.0..100.0);
        let b: f64 = if rng.gen_bool(0.05) {
            0.0
        } else {
            rng.gen_range(0.0..100.0)
        };
        let (x, y) = (mu_index(a, b).unwrap(), mu_index(b, a).unwrap());
        bounds_ok &= (0.0..=100.0).contains(&x) && (0.0..=100.0).contains(&y);
        worst_sum = worst_sum.max((x + y - 100.0).abs());
    }
    let mut endpoints_ok = true;
    for i in 0..MU_POLE_PAIRS {
        let monaco = random_pyramid(&mut rng, &format!("M{i}"));
        let uganda = random_pyramid(&mut rng, &format!("U{i}"));
        let poles = IndexPoles::new(&monaco, &uganda, IndexConfig::default()).unwrap();
        let (m, u) = (poles.row(&monaco).unwrap(), poles.row(&uganda).unwrap());
        endpoints_ok &= m.mu == Some(100.0) && u.mu == Some(0.0);
        let mid = poles.row(&random_pyramid(&mut rng, "X")).unwrap();
        bounds_ok &= mid.mu.is_some_and(|v| (0.0..=100.0).contains(&v));
    }
    check(
        bounds_ok && endpoints_ok && worst_sum <= MU_SUM_TOL,
        format!(
            "bounds hold: {bounds_ok}, pole endpoints 100/0: {endpoints_ok}, \
             max |MU(a,b)+MU(b,a)-100| {worst_sum:.2e} (tol {MU_SUM_TOL:e})"
        ),
    )
}

fn monotone_dominance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = param_names(10);
    let cfg = EgoConfig::default();
    let mut ok = 0;
    for i in 0..DOMINANCE_TRIPLES {
        let q = random_object(&mut rng, &format!("Q{i}"), &params);
        let mut t1 = Vec::new();
        let mut t2 = Vec::new();
        let strict = rng.gen_range(0..params.len());
        for (j, (name, v)) in q.params().enumerate() {
            let up = rng.gen_bool(0.5);
            let f1: f64 = rng.gen_range(1.0..3.0);
            let extra: f64 = if j == strict || rng.gen_bool(0.7) {
                rng.gen_range(1.01..3.0)
            } else {
                1.0
            };
            let f2 = f1 * extra;
            let (a, b) = if up {
                (v * f1, v * f2)
            } else {
                (v / f1, v / f2)
            };
            t1.push((name.to_string(), a));
            t2.push((name.to_string(), b));
        }
        let t1 = ObjectRecord::new("T1", t1).unwrap();
        let t2 = ObjectRecord::new("T2", t2).unwrap();
        let (r1, r2) = (
            compare(&q, &t1, &cfg).unwrap(),
            compare(&q, &t2, &cfg).unwrap(),
        );
        if r2.k_cont >= r1.k_cont && r2.k >= r1.k {
            ok += 1;
        }
    }
    check(
        ok == DOMINANCE_TRIPLES,
        format!("{ok}/{DOMINANCE_TRIPLES} constructions with K(Q,T2) >= K(Q,T1)"),
    )
}

fn open_mode() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let q = random_pyramid(&mut rng, "Q");
    let targets: Vec<ObjectRecord> = (0..BATCH_SIZE)
        .map(|i| random_pyramid(&mut rng, &format!("T{i}")))
        .collect();
    let cfg = EgoConfig::default();
    let par = batch_compare(&q, &targets, &cfg);
    let seq = batch_compare_sequential(&q, &targets, &cfg);
    let mut same = 0;
    for (i, t) in targets.iter().enumerate() {
        let alone = format!("{:?}", compare(&q, t, &cfg));
        if alone == format!("{:?}", par[i]) && alone == format!("{:?}", seq[i]) {
            same += 1;
        }
    }
    check(
        same == BATCH_SIZE,
        format!("{same}/{BATCH_SIZE} batch results byte-identical to standalone runs (parallel and sequential)"),
    )
}

fn performance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let q = random_pyramid(&mut rng, "Q");
    let t = random_pyramid(&mut rng, "T");
    let cfg = EgoConfig::with_delta(1e-6);
    let mut single = Duration::MAX;
    for _ in 0..COMPARE_REPEATS {
        let start = Instant::now();
        compare(&q, &t, &cfg).unwrap();
        single = single.min(start.elapsed());
    }
    let targets: Vec<ObjectRecord> = (0..BATCH_TARGETS)
        .map(|i| random_pyramid(&mut rng, &format!("T{i}")))
        .collect();
    let cfg = EgoConfig::default();
    let start = Instant::now();
    let results = batch_compare_sequential(&q, &targets, &cfg);
    let batch = start.elapsed();
    let all_ok = results.iter().all(|r| r.is_ok());
    check(
        single < COMPARE_BUDGET && batch < BATCH_BUDGET && all_ok,
        format!(
            "one compare at delta 1e-6 {single:?} (budget {COMPARE_BUDGET:?}), \
             {BATCH_TARGETS}-target sequential batch {batch:?} (budget {BATCH_BUDGET:?})"
        ),
    )
}

const TABLE_ORDER: [&str; 9] = [
    "Sweden",
    "Japan",
    "Austria",
    "Russia",
    "Argentina",
    "China",
    "Afghanistan",
    "Nigeria",
    "Uganda",
];

fn find<'a>(table: &'a pyramids::PyramidTable, name: &str) -> Option<&'a ObjectRecord> {
    table.get(name).or_else(|| {
        table
            .rows()
            .iter()
            .find(|r| r.name().eq_ignore_ascii_case(name))
    })
}

fn data_dependent() -> Outcome {
    let Ok(path) = std::env::var(DATA_ENV) else {
        return Outcome::Skip(format!("set {DATA_ENV} to a pyramid CSV to run"));
    };
    let table = match std::fs::File::open(&path)
        .map_err(Error::from)
        .and_then(pyramids::ingest)
    {
        Ok(t) => t,
        Err(e) => return Outcome::Fail(format!("cannot read {path}: {e}")),
    };
    let (Some(monaco), Some(uganda)) = (find(&table, "Monaco"), find(&table, "Uganda")) else {
        return Outcome::Fail("data must contain Monaco and Uganda".into());
    };
    let cfg = EgoConfig::default();

    let mut ranked = Vec::new();
    for (rank, name) in TABLE_ORDER.iter().enumerate() {
        match find(&table, name) {
            Some(t) => ranked.push((rank as f64, compare(monaco, t, &cfg).unwrap().k_cont)),
            None => return Outcome::Fail(format!("data lacks {name}")),
        }
    }
    let rho = spearman(&ranked).unwrap_or(f64::NAN);

    let male_q = sex_slice(uganda, Sex::Male).unwrap();
    let female_q = sex_slice(uganda, Sex::Female).unwrap();
    let mut sex_points = Vec::new();
    let mut sums = Vec::new();
    for t in table.rows() {
        let km = compare(&male_q, &sex_slice(t, Sex::Male).unwrap(), &cfg)
            .unwrap()
            .k_cont;
        let kf = compare(&female_q, &sex_slice(t, Sex::Female).unwrap(), &cfg)
            .unwrap()
            .k_cont;
        sex_points.push((km, kf));
        let k_mt = compare(monaco, t, &cfg).unwrap().k_cont;
        let k_ut = compare(uganda, t, &cfg).unwrap().k_cont;
        sums.push((k_mt, k_ut));
    }
    let slope = linear_fit(&sex_points).map(|f| f.0).unwrap_or(f64::NAN);
    let (mean, sd) = sum_constancy(&sums).unwrap();
    let rel_sd = sd / mean;
    check(
        rho >= SPEARMAN_MIN && (slope - PUBLISHED_SEX_SLOPE).abs() <= SEX_SLOPE_TOL && rel_sd <= SUM_REL_SD_MAX,
        format!(
            "Spearman vs published order {rho:.3} (min {SPEARMAN_MIN}), sex-split slope {slope:.3} \
             (target {PUBLISHED_SEX_SLOPE} +/- {SEX_SLOPE_TOL}), K_MT+K_UT mean {mean:.3} rel sd {rel_sd:.3} \
             (max {SUM_REL_SD_MAX})"
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("k-delta constancy", k_delta_constancy),
        ("additivity", additivity),
        ("etsm 3-object oracle", etsm_oracle),
        ("analytic oracle equivalence", analytic_oracle),
        ("self-comparison", self_comparison),
        ("model pyramids", model_pyramids),
        ("mu bounds and polarity", mu_bounds_and_polarity),
        ("monotone dominance", monotone_dominance),
        ("open-mode independence", open_mode),
        ("performance", performance),
        ("data-dependent (optional)", data_dependent),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Outcome::Pass(d) => println!("PASS {name}: {d}"),
            Outcome::Skip(d) => println!("SKIP {name}: {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL {name}: {d}");
            }
        }
    }
    println!("{} criteria, {failed} failed", criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
