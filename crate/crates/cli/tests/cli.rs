use std::path::{Path, PathBuf};
use std::process::Command;

use mpnet_cli::{PipelineConfig, RunManifest};
use mpnet_core::crf::binarize;
use mpnet_core::formats::{load, read_pfm, read_pgm_mask, read_ppm, write_pgm_mask, write_ppm};
use mpnet_core::fusion::{read_proposals, voting_objectness};
use mpnet_core::{BinaryMask, RgbImage};

const TINY: &str = r#"
seed = 11
[data]
train_count = 12
test_count = 4
[model]
widths = [4, 6, 8, 8, 8]
[train]
epochs = 2
step_every = 1
[crf]
iterations = 2
"#;

struct Ws {
    dir: PathBuf,
}

impl Ws {
    fn new(name: &str, extra: &str) -> Ws {
        let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli-tests").join(name);
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        let mut cfg: toml::Table = TINY.parse().unwrap();
        merge(&mut cfg, extra.parse().unwrap());
        std::fs::write(dir.join("cfg.toml"), toml::to_string(&cfg).unwrap()).unwrap();
        Ws { dir }
    }

    fn run(&self, args: &[&str]) -> (i32, String) {
        let out = Command::new(env!("CARGO_BIN_EXE_mpnet"))
            .current_dir(&self.dir)
            .arg("--config")
            .arg("cfg.toml")
            .args(args)
            .output()
            .unwrap();
        (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
    }

    fn ok(&self, args: &[&str]) {
        let (code, err) = self.run(args);
        assert_eq!(code, 0, "mpnet {args:?} failed:\n{err}");
    }

    fn p(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }
}

fn merge(into: &mut toml::Table, from: toml::Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) => merge(a, b),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

fn files_under(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn gen_data_is_byte_identical_for_a_fixed_seed() {
    let a = Ws::new("gen-a", "");
    let b = Ws::new("gen-b", "");
    a.ok(&["gen-data", "--train-count", "10"]);
    b.ok(&["gen-data", "--train-count", "10"]);
    for sub in ["runs/data", "runs/proposals"] {
        let (fa, fb) = (files_under(&a.p(sub)), files_under(&b.p(sub)));
        assert!(!fa.is_empty());
        assert!(fa == fb, "{sub} differs between identical runs");
    }
    let train = std::fs::read_dir(a.p("runs/data/train")).unwrap().count();
    assert_eq!(train, 10);
}

#[test]
fn empty_dataset_is_valid_but_train_rejects_it() {
    let ws = Ws::new("empty", "");
    ws.ok(&["gen-data", "--train-count", "0", "--test-count", "0"]);
    assert!(ws.p("runs/data/train").is_dir());
    let (code, err) = ws.run(&["train"]);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("runs/data/train"), "{err}");
}

#[test]
fn stages_compose_and_disabled_fusion_is_identity() {
    let ws = Ws::new("compose", "[fusion]\nenabled = false\n");
    ws.ok(&["gen-data"]);
    ws.ok(&["train"]);
    ws.ok(&["infer"]);
    ws.ok(&["fuse"]);
    ws.ok(&["crf"]);
    ws.ok(&["eval"]);
    let m = files_under(&ws.p("runs/out/m"));
    let p = files_under(&ws.p("runs/out/p"));
    assert_eq!(m.len(), 4);
    assert!(m == p, "fused maps differ from motion maps with fusion disabled");
    for (name, _) in &m {
        let mm = load(&ws.p("runs/out/m").join(name), read_pfm).unwrap();
        let pm = load(&ws.p("runs/out/p").join(name), read_pfm).unwrap();
        assert_eq!(binarize(&mm, 0.5).unwrap(), binarize(&pm, 0.5).unwrap());
    }
    let summary = std::fs::read_to_string(ws.p("runs/out/eval/summary.csv")).unwrap();
    let stages: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(stages, ["mpnet", "mpnet+obj", "mpnet+obj+crf"]);
    assert_eq!(files_under(&ws.p("runs/out/masks")).len(), 4);
}

#[test]
fn missing_stage_input_names_the_expected_file() {
    let ws = Ws::new("missing", "");
    let (code, err) = ws.run(&["fuse"]);
    assert_eq!(code, 3);
    assert!(err.contains("runs/out/m"), "{err}");
    let (code, err) = ws.run(&["infer"]);
    assert_eq!(code, 3);
    assert!(err.contains("model.mpnetw"), "{err}");
    ws.ok(&["gen-data"]);
    std::fs::remove_file(ws.p("runs/data/test/000002/flow_in.flo")).unwrap();
    ws.ok(&["train"]);
    let (code, err) = ws.run(&["infer"]);
    assert_eq!(code, 3);
    assert!(err.contains("000002/flow_in.flo"), "{err}");
}

#[test]
fn fusion_suppresses_moving_stuff_without_proposals() {
    let ws = Ws::new("stuff", "[data]\nstuff = true\n[proposals]\ndistractor_frac = 0.0\njitter = 0\n");
    ws.ok(&["gen-data"]);
    ws.ok(&["train"]);
    ws.ok(&["infer"]);
    ws.ok(&["fuse"]);
    let k = PipelineConfig::default().fusion.k;
    let mut stuff_checked = 0;
    for i in 0..4 {
        let name = format!("{i:06}");
        let m = load(&ws.p(&format!("runs/out/m/{name}.pfm")), read_pfm).unwrap();
        let p = load(&ws.p(&format!("runs/out/p/{name}.pfm")), read_pfm).unwrap();
        let (h, w) = m.dims();
        let o = voting_objectness(&read_proposals(&ws.p(&format!("runs/proposals/test/{name}"))).unwrap(), h, w).unwrap();
        let stuff = load(&ws.p(&format!("runs/data/test/{name}/stuff.pgm")), read_pgm_mask).unwrap();
        let moving = load(&ws.p(&format!("runs/data/test/{name}/moving.pgm")), read_pgm_mask).unwrap();
        let o_min = (0..h * w)
            .filter(|&j| moving.as_slice()[j] != 0)
            .map(|j| o.as_slice()[j])
            .fold(1.0f32, f32::min);
        for j in 0..h * w {
            let (mj, pj, oj) = (m.as_slice()[j], p.as_slice()[j], o.as_slice()[j]);
            if stuff.as_slice()[j] != 0 {
                assert_eq!(oj, 0.0, "a proposal covers stuff at frame {name}");
                assert!(pj <= k * mj + 1e-6, "stuff pixel kept: p {pj} m {mj}");
                stuff_checked += 1;
            }
            if moving.as_slice()[j] != 0 {
                assert!(pj >= (mj * (k + o_min)).min(1.0) - 1e-6, "object pixel lost: p {pj} m {mj}");
            }
        }
    }
    assert!(stuff_checked > 0);
}

#[test]
fn runs_are_reproducible_and_manifests_rerun() {
    let ws = Ws::new("repro", "");
    ws.ok(&["--deterministic", "pipeline"]);
    let weights = std::fs::read(ws.p("runs/model.mpnetw")).unwrap();
    let maps = files_under(&ws.p("runs/out/crf"));
    let manifest_path = ws.p("runs/out/manifest-pipeline.toml");
    let manifest: RunManifest = toml::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
    assert_eq!(manifest.command, "pipeline");
    assert!(manifest.deterministic);
    assert_eq!(manifest.threads, 1);
    let stages: Vec<&str> = manifest.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(stages, ["gen-data", "train", "infer", "fuse", "crf", "eval"]);
    assert!(manifest.outputs.iter().any(|o| o.ends_with("summary.csv")));

    std::fs::copy(&manifest_path, ws.p("snapshot.toml")).unwrap();
    std::fs::remove_dir_all(ws.p("runs")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mpnet"))
        .current_dir(&ws.dir)
        .args(["--config", "snapshot.toml", "--threads", "2", "pipeline"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(ws.p("runs/model.mpnetw")).unwrap(), weights);
    assert!(files_under(&ws.p("runs/out/crf")) == maps);
    let manifests: Vec<_> = std::fs::read_dir(ws.p("runs/out"))
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("manifest-"))
        .collect();
    assert_eq!(manifests.len(), 1);
}

#[test]
fn exit_codes_follow_the_failure_kind() {
    let ws = Ws::new("codes", "[train]\nlr = 1e30\n");
    std::fs::write(ws.p("bad.toml"), "[model]\nmodality = \"sonar\"\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mpnet"))
        .current_dir(&ws.dir)
        .args(["--config", "bad.toml", "train"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(ws.p("unknown.toml"), "[fusion]\nweight = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mpnet"))
        .current_dir(&ws.dir)
        .args(["--config", "unknown.toml", "eval"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(ws.run(&["eval"]).0, 3);
    ws.ok(&["gen-data"]);
    let (code, err) = ws.run(&["train"]);
    assert_eq!(code, 4, "{err}");
    assert!(!ws.p("runs/model.mpnetw").exists());
    assert!(ws.p("runs/out/train_log.csv").exists());
}

fn frame(h: usize, w: usize) -> RgbImage {
    let data = (0..h * w * 3).map(|i| (i * 37 % 251) as u8).collect();
    RgbImage::from_vec(h, w, data).unwrap()
}

fn overlay_via_cli(ws: &Ws, mask: &BinaryMask, rgb: &RgbImage) -> (i32, Option<Vec<u8>>) {
    std::fs::write(ws.p("mask.pgm"), write_pgm_mask(mask)).unwrap();
    std::fs::write(ws.p("frame.ppm"), write_ppm(rgb)).unwrap();
    let _ = std::fs::remove_file(ws.p("out.ppm"));
    let (code, _) = ws.run(&["overlay", "--mask", "mask.pgm", "--rgb", "frame.ppm", "--out", "out.ppm"]);
    (code, std::fs::read(ws.p("out.ppm")).ok())
}

#[test]
fn overlay_examples() {
    let ws = Ws::new("overlay", "");
    let rgb = frame(9, 13);
    let (code, out) = overlay_via_cli(&ws, &BinaryMask::new(9, 13).unwrap(), &rgb);
    assert_eq!(code, 0);
    assert_eq!(out.unwrap(), write_ppm(&rgb));

    let grey = RgbImage::from_vec(9, 13, vec![100; 9 * 13 * 3]).unwrap();
    let full = BinaryMask::from_fn(9, 13, |_, _| true).unwrap();
    let (_, out) = overlay_via_cli(&ws, &full, &grey);
    let tinted = read_ppm(&out.unwrap()).unwrap();
    let a = mpnet_cli::commands::OVERLAY_ALPHA;
    let c = mpnet_cli::commands::OVERLAY_COLOR;
    let expect: Vec<u8> = (0..3).map(|i| ((1.0 - a) * 100.0 + a * c[i] as f32).round() as u8).collect();
    for y in 0..9 {
        for x in 0..13 {
            assert_eq!(tinted.get(y, x).to_vec(), expect);
        }
    }

    let half = BinaryMask::from_fn(9, 13, |y, x| (y + x) % 2 == 0).unwrap();
    let (_, first) = overlay_via_cli(&ws, &half, &rgb);
    let (_, second) = overlay_via_cli(&ws, &half, &rgb);
    assert_eq!(first.unwrap(), second.unwrap());

    let (code, out) = overlay_via_cli(&ws, &BinaryMask::new(9, 12).unwrap(), &rgb);
    assert_eq!(code, 1);
    assert!(out.is_none());
}

#[test]
fn show_config_round_trips() {
    let ws = Ws::new("show", "");
    let out = Command::new(env!("CARGO_BIN_EXE_mpnet"))
        .current_dir(&ws.dir)
        .args(["--config", "cfg.toml", "--seed", "99", "show-config"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = PipelineConfig::parse(&text).unwrap();
    assert_eq!(cfg.seed, 99);
    assert_eq!(cfg.data.train_count, 12);
    assert_eq!(cfg.to_toml(), text);
}
