use serde_json::Value;
use smd_meta::analysis::analyze;
use smd_meta::cli::RESULTS_HEADER;
use smd_meta::simlab::{simulate_input, study_sizes, SimCell, SizePattern};
use smd_meta::smd::{hedges_g, ArmSummary};
use smd_meta::tau2::Tau2Method;
use std::path::Path;
use std::process::{Command, Output};

fn smdmeta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smdmeta"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn json_of(out: &Output) -> Value {
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn entry<'a>(v: &'a Value, list: &str, method: &str) -> &'a Value {
    v[list]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["method"] == method)
        .unwrap_or_else(|| panic!("{list} lacks {method}"))
}

#[test]
fn two_study_toy_matches_hand_arithmetic() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        dir.path(),
        "toy.csv",
        "study_id,n_t,n_c,g,var_g\nA,10,10,0,1\nB,10,10,2,1\n",
    );
    let v = json_of(&smdmeta(&["analyze", &f, "--format", "json"]));
    // Q(0) = 2 with unit weights; DL = (2 - 1)/(2 - 1) = 1 and 2/(1 + tau2) = 1 gives MP = 1.
    for m in ["DL", "MP"] {
        let t = &entry(&v, "tau2", m)["value"];
        assert!((t.as_f64().unwrap() - 1.0).abs() < 1e-8, "{m}: {t}");
    }
    let z = entry(&v, "effect_intervals", "Z-DL");
    assert!((z["half_width"].as_f64().unwrap() - 1.959963985).abs() < 1e-8);
    let h = entry(&v, "effect_intervals", "HKSJ");
    assert!((h["half_width"].as_f64().unwrap() - 12.7062047).abs() < 1e-6);
    let qp = entry(&v, "tau2_intervals", "QP");
    assert_eq!(qp["lower"], 0.0);
    assert_eq!(qp["lower_truncated"], true);
}

#[test]
fn raw_summaries_match_precomputed_g() {
    let arms = [
        (12, 5.1, 1.9, 11, 4.2, 2.2),
        (20, 3.0, 1.0, 25, 3.3, 1.2),
        (8, 10.0, 4.0, 9, 7.5, 3.1),
        (40, 0.2, 0.9, 38, -0.1, 1.1),
    ];
    let mut raw = String::from("study_id,n_t,n_c,mean_t,sd_t,mean_c,sd_c\n");
    let mut pre = String::from("study_id,n_t,n_c,g,var_g\n");
    for (i, &(nt, mt, st, nc, mc, sc)) in arms.iter().enumerate() {
        raw.push_str(&format!("s{i},{nt},{nc},{mt},{st},{mc},{sc}\n"));
        let s = hedges_g(
            &ArmSummary::new(nt, mt, st).unwrap(),
            &ArmSummary::new(nc, mc, sc).unwrap(),
        )
        .unwrap();
        pre.push_str(&format!("s{i},{nt},{nc},{:?},{:?}\n", s.g(), s.v2()));
    }
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "raw.csv", &raw);
    let b = write(dir.path(), "pre.csv", &pre);
    for fmt in ["text", "json"] {
        let x = smdmeta(&["analyze", &a, "--format", fmt]);
        let y = smdmeta(&["analyze", &b, "--format", fmt]);
        assert_eq!(x.status.code(), Some(0));
        assert_eq!(x.stdout, y.stdout);
    }
}

#[test]
fn identical_effects_truncate_and_flag_hksj() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        dir.path(),
        "same.csv",
        "study_id,n_t,n_c,g,var_g\na,10,10,0.4,0.2\nb,15,15,0.4,0.13\nc,30,20,0.4,0.09\n",
    );
    let v = json_of(&smdmeta(&["analyze", &f, "--format", "json"]));
    for m in ["DL", "REML", "MP", "J", "KDB"] {
        let t = entry(&v, "tau2", m);
        assert_eq!(t["value"], 0.0, "{m}");
    }
    assert_eq!(entry(&v, "effect_intervals", "HKSJ")["degenerate"], true);
    let text = smdmeta(&["analyze", &f]);
    let s = String::from_utf8(text.stdout).unwrap();
    assert!(s.contains("degenerate"));
    assert!(s.contains("truncated at 0"));
}

#[test]
fn method_selection() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        dir.path(),
        "toy.csv",
        "study_id,n_t,n_c,g,var_g\nA,10,10,0,1\nB,10,10,2,1\n",
    );
    let v = json_of(&smdmeta(&[
        "analyze",
        &f,
        "--format",
        "json",
        "--tau2",
        "MP",
        "--tau2-ci",
        "BJ",
        "--effect-ci",
        "SSW-KDB",
    ]));
    assert_eq!(v["tau2"].as_array().unwrap().len(), 1);
    assert_eq!(v["tau2_intervals"][0]["method"], "BJ");
    let effects: Vec<&str> = v["effects"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["method"].as_str().unwrap())
        .collect();
    assert_eq!(effects, ["MP", "SSW"]);
    assert_eq!(
        smdmeta(&["analyze", &f, "--tau2", "XX"]).status.code(),
        Some(2)
    );
    assert_eq!(
        smdmeta(&["analyze", &f, "--level", "0.4"]).status.code(),
        Some(2)
    );
}

#[test]
fn analyze_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.csv",
        "study_id,n_t,n_c,g,var_g\na,10,10,0.1,0.2\nb,ten,10,0.3,0.2\n",
    );
    let out = smdmeta(&["analyze", &bad]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8(out.stderr).unwrap();
    assert!(
        msg.contains("line 3") && msg.contains("column n_t"),
        "{msg}"
    );

    let small = write(
        dir.path(),
        "small.csv",
        "study_id,n_t,n_c,g,var_g\na,1,10,0.1,0.2\nb,10,10,0.3,0.2\n",
    );
    assert_eq!(smdmeta(&["analyze", &small]).status.code(), Some(3));
    let missing = dir.path().join("absent.csv");
    assert_eq!(
        smdmeta(&["analyze", missing.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn analyze_equals_in_memory_estimates_for_simulated_data() {
    let cell = SimCell {
        delta: 0.5,
        tau2: 1.0,
        k: 5,
        pattern: SizePattern::Unequal(30),
        q: 0.75,
        reps: 1,
        chunks: 1,
        seed: 3,
        level: 0.95,
    };
    let input = simulate_input(&cell, &study_sizes(&cell).unwrap(), 0).unwrap();
    let mut csv = String::from("study_id,n_t,n_c,g,var_g\n");
    for (i, s) in input.studies().iter().enumerate() {
        csv.push_str(&format!(
            "{i},{},{},{:?},{:?}\n",
            s.n_t(),
            s.n_c(),
            s.g(),
            s.v2()
        ));
    }
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "sim.csv", &csv);
    let v = json_of(&smdmeta(&["analyze", &f, "--format", "json"]));
    let a = analyze(&input, 0.95).unwrap();
    for m in Tau2Method::ALL {
        let expect = a.tau2_of(m).as_ref().unwrap().value;
        assert_eq!(
            entry(&v, "tau2", m.name())["value"].as_f64().unwrap(),
            expect
        );
    }
}

fn sim_args<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "simulate", "--delta", "0", "--tau2", "0", "--k", "5", "--n", "20", "--q", "0.5", "--reps",
        "40", "--chunks", "4", "--seed", "7", "--out", out,
    ];
    v.extend_from_slice(extra);
    v
}

#[test]
fn simulate_is_deterministic_with_documented_header() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = smdmeta(&sim_args(p.to_str().unwrap(), &[]));
        assert!(matches!(out.status.code(), Some(0) | Some(4)));
    }
    let x = std::fs::read_to_string(&a).unwrap();
    assert_eq!(x, std::fs::read_to_string(&b).unwrap());
    let mut lines = x.lines();
    assert_eq!(lines.next().unwrap(), RESULTS_HEADER.join(","));
    assert_eq!(
        lines.next().unwrap().split(',').take(6).collect::<Vec<_>>(),
        ["0", "0", "5", "equal", "20", "0.5"]
    );
    assert!(x.lines().all(|l| l.split(',').count() == 12));
    let leftovers = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(leftovers, 2, "temporary files left behind");
}

#[test]
fn simulate_rejects_bad_flags_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.csv");
    let s = p.to_str().unwrap();
    let cases: [&[&str]; 4] = [
        &["--delta", "1.5"],
        &["--reps", "41"],
        &["--k", "7", "--nbar", "30"],
        &["--q", "abc"],
    ];
    for extra in cases {
        let mut args = sim_args(s, &[]);
        for pair in extra.chunks(2) {
            if let Some(i) = args.iter().position(|a| *a == pair[0]) {
                args[i + 1] = pair[1];
            } else {
                args.extend_from_slice(pair);
            }
        }
        let out = smdmeta(&args);
        assert_eq!(out.status.code(), Some(2), "{extra:?}");
        assert!(!p.exists());
    }
    let mut ok = sim_args(s, &["--allow-custom"]);
    let i = ok.iter().position(|a| *a == "--delta").unwrap();
    ok[i + 1] = "1.5";
    assert!(matches!(smdmeta(&ok).status.code(), Some(0) | Some(4)));
}

#[test]
fn plot_round_trip_and_missing_panels() {
    let dir = tempfile::tempdir().unwrap();
    let res = dir.path().join("grid.csv");
    let out = smdmeta(&[
        "simulate",
        "--delta",
        "0",
        "--tau2",
        "0,1",
        "--n",
        "20,40,100,250",
        "--q",
        "0.5",
        "--reps",
        "4",
        "--chunks",
        "1",
        "--out",
        res.to_str().unwrap(),
    ]);
    assert!(matches!(out.status.code(), Some(0) | Some(4)));
    let figs = dir.path().join("figs");
    let out = smdmeta(&[
        "plot",
        res.to_str().unwrap(),
        "--metric",
        "tau2_coverage",
        "--out-dir",
        figs.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let svg = std::fs::read_to_string(figs.join("tau2_coverage_delta0_q0.5_equal.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches("class=\"reference\"").count(), 12);
    assert_eq!(svg.matches("K = ").count(), 12);
    for est in ["QP", "BJ", "J", "PL", "KDB"] {
        assert!(
            svg.contains(&format!(">{est}</text>")),
            "legend lacks {est}"
        );
    }
    let bias = smdmeta(&[
        "plot",
        res.to_str().unwrap(),
        "--metric",
        "tau2_bias",
        "--out-dir",
        figs.to_str().unwrap(),
    ]);
    assert_eq!(bias.status.code(), Some(0));
    let svg = std::fs::read_to_string(figs.join("tau2_bias_delta0_q0.5_equal.svg")).unwrap();
    assert!(!svg.contains("class=\"reference\""));

    let empty = write(
        dir.path(),
        "empty.csv",
        &format!("{}\n", RESULTS_HEADER.join(",")),
    );
    let out = smdmeta(&[
        "plot",
        &empty,
        "--metric",
        "tau2_bias",
        "--delta",
        "0",
        "--q",
        "0.5",
        "--family",
        "equal",
        "--out-dir",
        figs.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8(out.stderr).unwrap();
    assert!(msg.contains("12 panels have no data"), "{msg}");
    assert_eq!(msg.matches("n_bar=").count(), 12);
}
