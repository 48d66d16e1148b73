use globalrank::hypotest::{ExperimentAssignment, Group, Method};
use globalrank::platform::{export_ranks, import_ranks, run_analysis};
use globalrank::rankcore::{compute_global_ranks, MetricRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn population(n: usize, seed: u64) -> Vec<MetricRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| MetricRecord::new(format!("user{i}"), rng.random::<f64>() * 1e3))
        .collect()
}

#[test]
fn tie_free_ranks_match_brute_force_count() {
    let records = population(1000, 1);
    let table = compute_global_ranks(&records, 0).unwrap();
    for r in &records {
        let below = records.iter().filter(|o| o.value <= r.value).count() as u64;
        assert_eq!(table.rank_of(r.user_id.as_str()), Some(below));
    }
}

fn experiment(id: &str, users: impl Iterator<Item = usize>) -> ExperimentAssignment {
    let mut e = ExperimentAssignment::new(id);
    for (k, u) in users.enumerate() {
        let g = if k % 3 == 0 { Group::Treatment } else { Group::Control };
        e.assign(format!("user{u}"), g).unwrap();
    }
    e
}

#[test]
fn unrelated_experiments_do_not_change_results() {
    let records = population(500, 2);
    let a = experiment("a", 0..200);
    let b = experiment("b", 150..400);
    let c = experiment("c", (0..500).step_by(7));
    let all = run_analysis(&records, &[a.clone(), b.clone(), c], 9, &[0.05], &Method::ALL).unwrap();
    let two = run_analysis(&records, &[b, a], 9, &[0.05], &Method::ALL).unwrap();
    let pick = |rows: &[globalrank::platform::ReportRow], id: &str| {
        rows.iter().filter(|r| r.experiment_id == id).cloned().collect::<Vec<_>>()
    };
    assert_eq!(pick(&all.rows, "a"), pick(&two.rows, "a"));
    assert_eq!(pick(&all.rows, "b"), pick(&two.rows, "b"));
    assert_eq!(pick(&all.rows, "a").len(), 3);
}

#[test]
fn exported_ranks_reimport_identically() {
    let records = population(2000, 3);
    let table = compute_global_ranks(&records, 77).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ranks.csv");
    export_ranks(&table, std::fs::File::create(&path).unwrap()).unwrap();
    let back = import_ranks(&path).unwrap();
    assert_eq!(back.ranks(), table.ranks());
    assert_eq!(back.tiebreak_seed(), 77);
}
