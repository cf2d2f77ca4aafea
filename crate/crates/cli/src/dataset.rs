//! On-disk benchmark layout: `scene_NNN.json` + `input_NNN.pdens` pairs and
//! a `manifest.json` listing the train and test splits.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use bayescount::io::{read_grid, read_scene, write_grid, write_scene};
use bayescount::{Benchmark, Error, Sample};
use serde_json::{json, Value};

pub const MANIFEST: &str = "manifest.json";

fn entry(k: usize) -> (String, String) {
    (format!("scene_{k:03}.json"), format!("input_{k:03}.pdens"))
}

pub fn write(bench: &Benchmark, name: &str, dir: &Path) -> Result<usize> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut splits = [Vec::new(), Vec::new()];
    for (k, (sample, split)) in bench
        .train
        .iter()
        .map(|s| (s, 0))
        .chain(bench.test.iter().map(|s| (s, 1)))
        .enumerate()
    {
        let (scene, input) = entry(k);
        write_scene(&sample.scene, dir.join(&scene))?;
        write_grid(&sample.input, dir.join(&input))?;
        splits[split].push(json!({ "scene": scene, "input": input }));
    }
    let total = splits[0].len() + splits[1].len();
    let [train, test] = splits;
    let manifest = json!({ "benchmark": name, "train": train, "test": test });
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    let path = dir.join(MANIFEST);
    fs::write(&path, text).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    Ok(total)
}

fn manifest_error(msg: impl Into<String>) -> Error {
    Error::Parse(format!("{MANIFEST}: {}", msg.into()))
}

fn field<'a>(item: &'a Value, key: &str) -> Result<&'a str, Error> {
    item.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| manifest_error(format!("entry lacks string field '{key}'")))
}

/// Reads one split ("train" or "test") of a dataset directory.
pub fn read_split(dir: &Path, split: &str) -> Result<Vec<Sample>> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    let manifest: Value = serde_json::from_str(&text).map_err(|e| manifest_error(e.to_string()))?;
    let items = manifest
        .get(split)
        .and_then(Value::as_array)
        .ok_or_else(|| manifest_error(format!("missing '{split}' list")))?;
    let mut samples = Vec::with_capacity(items.len());
    for item in items {
        let scene = read_scene(dir.join(field(item, "scene")?))?;
        let input = read_grid(dir.join(field(item, "input")?))?;
        input.check_shape(scene.shape())?;
        samples.push(Sample { input, scene });
    }
    Ok(samples)
}
