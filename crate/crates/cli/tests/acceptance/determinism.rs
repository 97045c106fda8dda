use std::path::Path;
use std::process::Command;

use sha2::{Digest, Sha256};

use crate::Outcome;

fn kairos(dir: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_kairos"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{}: {}", args[0], String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(out.stdout)
}

fn sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn file_hash(dir: &Path, name: &str) -> Result<String, String> {
    std::fs::read(dir.join(name)).map(|b| sha256(&b)).map_err(|e| format!("{name}: {e}"))
}

fn manifest_without_clock(dir: &Path, name: &str) -> Result<serde_json::Value, String> {
    let text = std::fs::read_to_string(dir.join(name)).map_err(|e| format!("{name}: {e}"))?;
    let mut v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    v.as_object_mut()
        .and_then(|o| o.remove("wall_clock_seconds"))
        .ok_or("manifest has no wall_clock_seconds")?;
    Ok(v)
}

/// Every command's primary outputs, hashed, for one pass in a fresh
/// directory. Paths are relative so both passes echo the same ones.
fn pass(dir: &Path) -> Result<Vec<(String, String)>, String> {
    let mut h = Vec::new();
    kairos(dir, &["synth", "--trees", "30", "--seed", "7", "--out", "synth"])?;
    h.push(("synth corpus".into(), file_hash(dir, "synth/corpus.tsv")?));
    h.push(("synth oracle".into(), file_hash(dir, "synth/oracle.kv")?));
    let c = ["--corpus", "synth/corpus.tsv"];
    for format in ["text", "kv"] {
        let s = kairos(dir, &[&["stats"][..], &c, &["--format", format, "--min-votes", "3"]].concat())?;
        h.push((format!("stats {format}"), sha256(&s)));
    }
    kairos(dir, &[&["filter"][..], &c, &["--out", "filtered.tsv"]].concat())?;
    h.push(("filter".into(), file_hash(dir, "filtered.tsv")?));
    let s = kairos(dir, &[&["split"][..], &c, &["--seed", "3", "--out", "split"]].concat())?;
    h.push(("split stdout".into(), sha256(&s)));
    for part in ["train", "validation", "test"] {
        h.push((format!("split {part}"), file_hash(dir, &format!("split/{part}.tsv"))?));
    }
    for (model, context) in [("bilstm", "attention"), ("fasttext", "none"), ("svm", "none"), ("majority", "none")] {
        let run = format!("run-{model}");
        let s = kairos(
            dir,
            &[
                &["train"][..],
                &c,
                &[
                    "--split-dir", "split", "--model", model, "--context", context, "--window", "2", "--seeds", "2",
                    "--epochs", "4", "--format", "kv", "--out", &run,
                ],
            ]
            .concat(),
        )?;
        h.push((format!("train {model} stdout"), sha256(&s)));
        let m = manifest_without_clock(dir, &format!("{run}/manifest.json"))?;
        h.push((format!("train {model} manifest"), sha256(m.to_string().as_bytes())));
        let ckpt = format!("{run}/checkpoint-seed-1.json");
        h.push((format!("train {model} checkpoint"), file_hash(dir, &ckpt)?));
        let s = kairos(
            dir,
            &[&["eval"][..], &c, &["--split-dir", "split", "--checkpoint", &ckpt, "--format", "kv"]].concat(),
        )?;
        h.push((format!("eval {model}"), sha256(&s)));
        let s = kairos(dir, &[&["predict"][..], &c, &["--checkpoint", &ckpt, "--format", "kv"]].concat())?;
        h.push((format!("predict {model}"), sha256(&s)));
    }
    Ok(h)
}

pub fn cli_determinism() -> Outcome {
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (a, b) = match pass(da.path()).and_then(|a| pass(db.path()).map(|b| (a, b))) {
        Ok(x) => x,
        Err(e) => return Outcome::Fail(e),
    };
    let differing: Vec<&str> = a.iter().zip(&b).filter(|(x, y)| x.1 != y.1).map(|(x, _)| x.0.as_str()).collect();
    crate::check(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} outputs identical across reruns", a.len())
        } else {
            format!("outputs differ: {}", differing.join(", "))
        },
    )
}
