mod common;

use std::path::Path;

use common::natural::write_cifar_standin;
use frscatter::filters::FilterParams;
use frscatter::ingest::DatasetSpec;
use frscatter::pipeline::{
    relative_improvement, run_plan, ArmSpec, DecoderSettings, ExperimentPlan, FusionSpec, ImprovementBase, Status,
};

fn tiny_plan(data: &Path) -> ExperimentPlan {
    ExperimentPlan {
        seed: 9,
        workers: 1,
        parallel_arms: false,
        persist_intermediates: true,
        dataset: DatasetSpec::cifar10(data, 24, 8, 1),
        scattering: FilterParams::new(3, 8),
        decoder: DecoderSettings {
            base_width: 16,
            batch_size: 8,
            max_steps: 6,
            eval_every: 3,
            eval_samples: 8,
            ..DecoderSettings::default()
        },
        arms: vec![
            ArmSpec::gsn("gsn_pca", 16),
            ArmSpec::gfrsn([1.0, 1.0]),
            ArmSpec::gfrsn([0.4, 1.0]),
        ],
        fusion: vec![
            FusionSpec {
                a: "frac_0.40_1.00".into(),
                b: "frac_1.00_1.00".into(),
                weight: 0.5,
            },
            FusionSpec {
                a: "frac_0.40_1.00".into(),
                b: "frac_0.40_1.00".into(),
                weight: 0.5,
            },
            FusionSpec {
                a: "frac_0.40_1.00".into(),
                b: "frac_1.00_1.00".into(),
                weight: 1.0,
            },
        ],
        report: Default::default(),
    }
}

fn data_dir(root: &Path) -> std::path::PathBuf {
    let d = root.join("cifar");
    write_cifar_standin(&d, 30, 10, 77);
    d
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn full_run_layout_fusion_and_improvements() {
    let root = tempfile::tempdir().unwrap();
    let plan = tiny_plan(&data_dir(root.path()));
    let out = root.path().join("run");
    let s = run_plan(&plan, &out).unwrap();

    assert_eq!(s.rows.len(), plan.arms.len() + plan.fusion.len());
    assert!(s.rows.iter().all(|r| r.status == Status::Ok));
    let mut master = csv::Reader::from_path(out.join("master.csv")).unwrap();
    assert_eq!(master.records().count(), 6);

    // The baseline and the FMF arm at (1, 1) share one encoding.
    assert_eq!(
        read(out.join("arms/gsn_pca/embeddings_train.frst")),
        read(out.join("arms/frac_1.00_1.00/embeddings_train.frst"))
    );
    assert_eq!(s.row("gsn_pca").unwrap().kind, "gsn");
    assert!(!read(out.join("arms/gsn_pca/inputs_train.frst")).is_empty());

    let best = s.row("frac_0.40_1.00").unwrap();
    let self_fused = s.row("frac_0.40_1.00+frac_0.40_1.00@0.5").unwrap();
    assert_eq!(self_fused.train, best.train);
    assert_eq!(self_fused.test, best.test);
    let boundary = s.row("frac_0.40_1.00+frac_1.00_1.00@1").unwrap();
    assert_eq!(boundary.test, best.test);
    assert!(boundary.fused);

    // Percentages recomputed from the CSV text match the emitted table.
    let rows: Vec<csv::StringRecord> = csv::Reader::from_path(out.join("master.csv"))
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect();
    let reference = rows.iter().find(|r| &r[0] == "frac_1.00_1.00").unwrap();
    let imps: Vec<csv::StringRecord> = csv::Reader::from_path(out.join("improvements.csv"))
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect();
    assert_eq!(imps.len(), rows.len());
    for imp in &imps {
        let row = rows.iter().find(|r| r[0] == imp[0]).unwrap();
        for (col, icol) in (8..12).zip(4..8) {
            let v: f64 = row[col].parse().unwrap();
            let r: f64 = reference[col].parse().unwrap();
            let pct = relative_improvement(v, r, ImprovementBase::Larger);
            let shown: f64 = imp[icol].parse().unwrap();
            assert!((pct - shown).abs() <= 0.05 + 1e-9, "{}: {pct} vs {shown}", &imp[0]);
        }
    }
    let own = imps.iter().find(|r| &r[0] == "frac_1.00_1.00").unwrap();
    assert_eq!(&own[6], "0.0");

    for f in [
        "manifest.toml",
        "dataset.txt",
        "grid_train_original.png",
        "grid_test_original.png",
        "arms/frac_0.40_1.00/manifest.toml",
        "arms/frac_0.40_1.00/curve.csv",
        "arms/frac_0.40_1.00/grid_test_generated.png",
        "arms/frac_0.40_1.00/final/manifest.json",
        "arms/gsn_pca/pca.json",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let manifest = String::from_utf8(read(out.join("manifest.toml"))).unwrap();
    for key in ["crate_version", "bn_momentum", "ssim_window", "pca_whiten_floor", "[plan]"] {
        assert!(manifest.contains(key), "manifest lacks {key}");
    }
}

#[test]
fn arms_do_not_depend_on_each_other() {
    let root = tempfile::tempdir().unwrap();
    let data = data_dir(root.path());
    let plan = tiny_plan(&data);
    run_plan(&plan, root.path().join("all")).unwrap();

    let mut alone = plan.clone();
    alone.arms.retain(|a| a.name == "frac_0.40_1.00");
    alone.fusion.clear();
    run_plan(&alone, root.path().join("alone")).unwrap();
    for f in ["curve.csv", "generated_test.frst", "eval_train.csv"] {
        assert_eq!(
            read(root.path().join("all/arms/frac_0.40_1.00").join(f)),
            read(root.path().join("alone/arms/frac_0.40_1.00").join(f)),
            "{f}"
        );
    }
}

#[test]
fn parallel_arms_match_sequential() {
    let root = tempfile::tempdir().unwrap();
    let data = data_dir(root.path());
    let mut plan = tiny_plan(&data);
    plan.fusion.truncate(1);
    run_plan(&plan, root.path().join("seq")).unwrap();
    plan.parallel_arms = true;
    plan.workers = 2;
    run_plan(&plan, root.path().join("par")).unwrap();
    assert_eq!(read(root.path().join("seq/master.csv")), read(root.path().join("par/master.csv")));
}

#[test]
fn a_failing_arm_does_not_stop_the_plan() {
    let root = tempfile::tempdir().unwrap();
    let mut plan = tiny_plan(&data_dir(root.path()));
    // More components than the embedding has dimensions.
    plan.arms[0] = ArmSpec::gsn("gsn_pca", 100_000);
    let s = run_plan(&plan, root.path().join("run")).unwrap();
    assert!(matches!(s.row("gsn_pca").unwrap().status, Status::Failed(_)));
    assert!(s.rows.iter().filter(|r| r.name != "gsn_pca").all(|r| r.status == Status::Ok));
    let text = String::from_utf8(read(root.path().join("run/master.csv"))).unwrap();
    assert!(text.lines().any(|l| l.starts_with("gsn_pca,") && l.contains("failed")));
}

#[test]
fn fusion_with_unknown_arm_is_rejected() {
    let mut plan = tiny_plan(Path::new("unused"));
    plan.fusion[0].b = "missing".into();
    assert!(plan.validate().is_err());
}

#[test]
fn shipped_plan_is_valid() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../plans/cifar_desk.toml");
    let plan = ExperimentPlan::load(path).unwrap();
    assert_eq!(plan.arms.len(), 18);
    assert_eq!(plan.reference_arm().unwrap().name, "frac_1.00_1.00");
    assert_eq!(plan.decoder.base_width, 32);
}
