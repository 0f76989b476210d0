//! Re-runs every experiment fixture and compares against the stored CSVs in
//! `experiments/golden`. Regenerate those with
//! `mec-pricing sweep --config <file> --out experiments/golden`.

use std::path::{Path, PathBuf};

use mec_pricing::experiment::{run_experiment, validate_config};

fn experiments() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../experiments")
}

fn read(path: &Path) -> Vec<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    reader.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect()
}

fn close(a: &str, b: &str) -> bool {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) if x.is_nan() && y.is_nan() => true,
        (Ok(x), Ok(y)) => x == y || (x - y).abs() <= 1e-9 * x.abs().max(y.abs()),
        _ => a == b,
    }
}

#[test]
fn fixtures_reproduce_golden_outputs() {
    let out = tempfile::tempdir().unwrap();
    let mut fixtures: Vec<PathBuf> = std::fs::read_dir(experiments())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    fixtures.sort();
    assert!(fixtures.len() >= 10);

    for fixture in fixtures {
        let spec = validate_config(&fixture).unwrap().spec;
        let output = run_experiment(&spec, Some(out.path())).unwrap();
        let golden = experiments().join("golden").join(output.csv_path.file_name().unwrap());
        let (got, want) = (read(&output.csv_path), read(&golden));
        assert_eq!(got.len(), want.len(), "{}: row count", fixture.display());
        for (i, (g, w)) in got.iter().zip(&want).enumerate() {
            assert_eq!(g.len(), w.len(), "{}: row {i} width", fixture.display());
            for (col, (a, b)) in g.iter().zip(w).enumerate() {
                assert!(close(a, b), "{} row {i} column {} ({}): {a} vs {b}", fixture.display(), col, want[0][col]);
            }
        }
    }
}
