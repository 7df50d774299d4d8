//! End-to-end checks of the binary: the full subcommand chain on a small
//! fixture, config-file merging, emitted-file round-trips through the library
//! parsers, and the error contract (nonzero exit, JSON diagnostics).

use std::path::Path;
use std::process::{Command, Output};

use commnet::geodata::load_municipalities_csv;
use commnet::od::{load_aggregates_csv, load_flows_csv, load_region_plus_outside_csv};

fn commnet(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_commnet"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawning the binary")
}

fn assert_ok(output: &Output) {
    assert!(
        output.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn assert_json_error(output: &Output, needle: &str) {
    assert!(!output.status.success(), "expected a failure");
    let stderr = String::from_utf8_lossy(&output.stderr);
    let line = stderr.lines().last().unwrap_or_default();
    let parsed: serde_json::Value =
        serde_json::from_str(line).unwrap_or_else(|_| panic!("stderr is not JSON: {stderr}"));
    let chain = parsed["chain"]
        .as_array()
        .unwrap_or_else(|| panic!("no error chain in {parsed}"));
    assert!(
        chain
            .iter()
            .any(|entry| entry.as_str().unwrap_or_default().contains(needle)),
        "error chain {chain:?} does not mention `{needle}`"
    );
}

fn synth_fixture(dir: &Path) {
    assert_ok(&commnet(
        &[
            "synth",
            "--n",
            "8",
            "--m",
            "14",
            "--commuters",
            "1500",
            "--extent",
            "40000",
            "--seed",
            "21",
            "--out",
            "fixture",
        ],
        dir,
    ));
}

#[test]
fn full_subcommand_chain_on_a_synthetic_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    synth_fixture(root);

    // The emitted fixture round-trips through the library parsers.
    let registry = load_municipalities_csv(&root.join("fixture/municipalities.csv")).unwrap();
    assert_eq!(registry.region_count(), 8);
    assert_eq!(registry.total_count(), 14);
    let aggregates = load_aggregates_csv(&root.join("fixture/aggregates.csv")).unwrap();
    assert_eq!(aggregates.len(), 14);
    let ground_truth =
        load_flows_csv(&root.join("fixture/ground_truth_flows.csv"), &registry).unwrap();
    assert_eq!(ground_truth.total(), 1500);
    let out_total: u64 = aggregates.iter().map(|a| a.out_commuters).sum();
    assert_eq!(out_total, 1500);

    assert_ok(&commnet(
        &[
            "generate",
            "--municipalities",
            "fixture/municipalities.csv",
            "--aggregates",
            "fixture/aggregates.csv",
            "--beta",
            "constant",
            "--replications",
            "2",
            "--seed",
            "5",
            "--out",
            "gen",
        ],
        root,
    ));
    // Generated files parse back and conserve the aggregate demand.
    for rep in ["rep000", "rep001"] {
        let full = load_flows_csv(&root.join("gen").join(rep).join("flows_full.csv"), &registry)
            .unwrap();
        assert_eq!(full.total(), 1500);
        let row_sums = full.row_sums();
        for (pos, record) in aggregates.iter().enumerate().take(8) {
            assert_eq!(row_sums[registry.position(&record.id).unwrap()], record.out_commuters, "row {pos}");
        }
        let collapsed = load_region_plus_outside_csv(
            &root.join("gen").join(rep).join("flows_collapsed.csv"),
            &registry,
        )
        .unwrap();
        assert_eq!(collapsed.region_count(), 8);
        let metadata: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(root.join("gen").join(rep).join("metadata.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(metadata["rng"], "chacha8");
        assert_eq!(metadata["beta"], 1.94e-4);
    }

    assert_ok(&commnet(
        &[
            "compare",
            "--municipalities",
            "fixture/municipalities.csv",
            "--aggregates",
            "fixture/aggregates.csv",
            "--observed",
            "fixture/ground_truth_flows.csv",
            "--replications",
            "4",
            "--seed",
            "2",
            "--out",
            "cmp",
        ],
        root,
    ));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(root.join("cmp/compare_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["per_replication"].as_array().unwrap().len(), 4);
    let mean_cpc = report["cpc"]["mean"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&mean_cpc));
    assert!(report["cpc"]["min"].as_f64().unwrap() <= mean_cpc);

    assert_ok(&commnet(
        &[
            "calibrate",
            "--municipalities",
            "fixture/municipalities.csv",
            "--aggregates",
            "fixture/aggregates.csv",
            "--observed",
            "fixture/ground_truth_flows.csv",
            "--replications",
            "2",
            "--seed",
            "3",
            "--out",
            "cal",
        ],
        root,
    ));
    let calibration: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(root.join("cal/calibration_report.json")).unwrap(),
    )
    .unwrap();
    let report = &calibration["report"];
    assert_eq!(report["per_replication"].as_array().unwrap().len(), 2);
    assert!(report["beta_min"].as_f64().unwrap() <= report["beta_average"].as_f64().unwrap());
    assert!(!report["per_replication"][0]["trace"].as_array().unwrap().is_empty());

    assert_ok(&commnet(
        &[
            "distances",
            "--municipalities",
            "fixture/municipalities.csv",
            "--aggregates",
            "fixture/aggregates.csv",
            "--observed",
            "fixture/ground_truth_flows.csv",
            "--replications",
            "2",
            "--seed",
            "4",
            "--bins",
            "40",
            "--out",
            "dist",
        ],
        root,
    ));
    for path in [
        "dist/observed_distribution.csv",
        "dist/observed_density.csv",
        "dist/rep000/distribution.csv",
        "dist/rep000/density.csv",
        "dist/rep001/distribution.csv",
        "dist/ks.json",
    ] {
        assert!(root.join(path).is_file(), "missing {path}");
    }
    // Binned density integrates to one.
    let mut reader = csv::Reader::from_path(root.join("dist/rep000/density.csv")).unwrap();
    let mut mass = 0.0f64;
    let mut bins = 0usize;
    for row in reader.records() {
        let row = row.unwrap();
        let lo: f64 = row[0].parse().unwrap();
        let hi: f64 = row[1].parse().unwrap();
        let density: f64 = row[2].parse().unwrap();
        mass += (hi - lo) * density;
        bins += 1;
    }
    assert_eq!(bins, 40);
    assert!((mass - 1.0).abs() < 1e-9, "density mass {mass}");
}

#[test]
fn compare_is_perfect_when_capacities_force_the_matrix() {
    // Two municipalities with unit demand and unit capacity admit exactly one
    // zero-diagonal matrix, so every replication reproduces the observed
    // network and the mean CPC is exactly one.
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(
        root.join("municipalities.csv"),
        "id,x,y,in_region\na,0,0,1\nb,5000,0,1\n",
    )
    .unwrap();
    std::fs::write(
        root.join("aggregates.csv"),
        "id,in_commuters,out_commuters\na,1,1\nb,1,1\n",
    )
    .unwrap();
    std::fs::write(root.join("observed.csv"), "origin_id,dest_id,count\na,b,1\nb,a,1\n").unwrap();
    assert_ok(&commnet(
        &[
            "compare",
            "--municipalities",
            "municipalities.csv",
            "--aggregates",
            "aggregates.csv",
            "--observed",
            "observed.csv",
            "--replications",
            "5",
            "--out",
            "cmp",
        ],
        root,
    ));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(root.join("cmp/compare_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["cpc"]["mean"], 1.0);
    assert_eq!(report["cpc"]["min"], 1.0);
    assert_eq!(report["ks"]["max"], 0.0);
}

#[test]
fn synth_handles_small_and_large_municipality_counts() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    // Small dense urban scale: 36 region municipalities.
    assert_ok(&commnet(
        &[
            "synth", "--n", "36", "--m", "200", "--commuters", "30000", "--extent", "30000",
            "--seed", "2", "--out", "small",
        ],
        root,
    ));
    // Large regional scale: 3020 region + 3845 outside municipalities, above
    // the auto threshold, so generation runs on lazily evaluated distances.
    // Commuter count kept small to keep the lazy path quick.
    assert_ok(&commnet(
        &[
            "synth", "--n", "3020", "--m", "6865", "--commuters", "20000", "--extent", "250000",
            "--seed", "3", "--out", "large",
        ],
        root,
    ));
    for (out, region, commuters) in [("small", 36usize, 30_000u64), ("large", 3020, 20_000)] {
        let registry =
            load_municipalities_csv(&root.join(out).join("municipalities.csv")).unwrap();
        assert_eq!(registry.region_count(), region);
        let flows =
            load_flows_csv(&root.join(out).join("ground_truth_flows.csv"), &registry).unwrap();
        assert_eq!(flows.total(), commuters);
        let aggregates = load_aggregates_csv(&root.join(out).join("aggregates.csv")).unwrap();
        let row_sums = flows.row_sums();
        for record in aggregates.iter().take(region) {
            assert_eq!(
                row_sums[registry.position(&record.id).unwrap()],
                record.out_commuters
            );
        }
    }
}

#[test]
fn config_file_supplies_values_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    synth_fixture(root);
    std::fs::write(
        root.join("run.toml"),
        "municipalities = \"fixture/municipalities.csv\"\n\
         aggregates = \"fixture/aggregates.csv\"\n\
         out = \"from_config\"\n\
         beta = \"3e-4\"\n\
         seed = 1\n\
         replications = 1\n",
    )
    .unwrap();
    // Flag --seed overrides the config value; everything else comes from the file.
    assert_ok(&commnet(
        &["generate", "--config", "run.toml", "--seed", "9"],
        root,
    ));
    let metadata: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(root.join("from_config/rep000/metadata.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(metadata["base_seed"], 9);
    assert_eq!(metadata["beta"], 3e-4);
    assert_eq!(metadata["beta_source"], "explicit");
}

#[test]
fn errors_exit_nonzero_with_json_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    synth_fixture(root);

    // Missing input file.
    let out = commnet(
        &[
            "generate",
            "--municipalities",
            "nope.csv",
            "--aggregates",
            "fixture/aggregates.csv",
            "--out",
            "x",
        ],
        root,
    );
    assert_json_error(&out, "nope.csv");

    // Infeasible aggregates: zero every in-commuter column.
    let text = std::fs::read_to_string(root.join("fixture/aggregates.csv")).unwrap();
    let mut lines: Vec<String> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if k == 0 {
            lines.push(line.to_string());
        } else {
            let mut parts: Vec<&str> = line.split(',').collect();
            parts[1] = "0";
            lines.push(parts.join(","));
        }
    }
    std::fs::write(root.join("infeasible.csv"), lines.join("\n") + "\n").unwrap();
    let out = commnet(
        &[
            "generate",
            "--municipalities",
            "fixture/municipalities.csv",
            "--aggregates",
            "infeasible.csv",
            "--out",
            "x",
        ],
        root,
    );
    assert_json_error(&out, "infeasible");

    // The constant exponent belongs to the exponential shape.
    let out = commnet(
        &[
            "generate",
            "--municipalities",
            "fixture/municipalities.csv",
            "--aggregates",
            "fixture/aggregates.csv",
            "--shape",
            "power",
            "--beta",
            "constant",
            "--out",
            "x",
        ],
        root,
    );
    assert_json_error(&out, "exponential");

    // compare needs observed flows.
    let out = commnet(
        &[
            "compare",
            "--municipalities",
            "fixture/municipalities.csv",
            "--aggregates",
            "fixture/aggregates.csv",
            "--out",
            "x",
        ],
        root,
    );
    assert_json_error(&out, "--observed");

    // calibrate as a beta source needs observed flows too.
    let out = commnet(
        &[
            "generate",
            "--municipalities",
            "fixture/municipalities.csv",
            "--aggregates",
            "fixture/aggregates.csv",
            "--beta",
            "calibrate",
            "--out",
            "x",
        ],
        root,
    );
    assert_json_error(&out, "--observed");
}
