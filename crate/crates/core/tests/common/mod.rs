//! Synthetic embedding geometry shared by the pipeline and acceptance tests.
//!
//! Three ID classes and two OOD classes live as Gaussian clusters on the unit sphere.
//! Each OOD centre leans toward one ID centre, which makes the plain ID-only softmax
//! confuse some OOD samples for that class. Two "envisioned" outlier text embeddings sit
//! next to the OOD centres, and a replay cache answers the far-mode prompt with them.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use eoe::envision::{build_prompts, CacheEntry, LlmClient, PromptMode, PromptSpec, ResponseCache};
use eoe::envision::EndpointConfig;
use eoe::{write_bundle, EmbeddingTable, Group, LabelSet, RowMeta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const DIM: usize = 32;
pub const SEED: u64 = 20_231_008;
pub const ID_LABELS: [&str; 3] = ["husky dog", "garfield cat", "church"];
pub const OUTLIER_LABELS: [&str; 2] = ["wolf", "lighthouse"];
pub const MODEL: &str = "gpt-3.5-turbo-16k";
pub const BASE_URL: &str = "http://127.0.0.1:9/v1";
pub const RUNS: usize = 3;
pub const SAMPLES_PER_SIDE: usize = 300;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/two_cluster")
}

fn gaussian(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..DIM).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn mix(a: &[f64], wa: f64, b: &[f64], wb: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect()
}

/// Point drawn around `centre` with isotropic noise of total norm about `spread`.
fn around(rng: &mut ChaCha8Rng, centre: &[f64], spread: f64) -> Vec<f32> {
    let noise = gaussian(rng);
    let scale = spread / (DIM as f64).sqrt();
    unit(mix(centre, 1.0, &noise, scale)).into_iter().map(|x| x as f32).collect()
}

pub struct Geometry {
    pub text: EmbeddingTable,
    pub id_images: EmbeddingTable,
    pub ood_images: EmbeddingTable,
}

pub fn geometry() -> Geometry {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let id_centres: Vec<Vec<f64>> = (0..3).map(|_| unit(gaussian(&mut rng))).collect();
    let ood_centres: Vec<Vec<f64>> = (0..2)
        .map(|o| unit(mix(&id_centres[o], 0.7, &unit(gaussian(&mut rng)), 0.71)))
        .collect();

    let mut text_rows: Vec<(RowMeta, Vec<f32>)> = Vec::new();
    for (label, c) in ID_LABELS.iter().zip(&id_centres) {
        text_rows.push((RowMeta::new(*label, None), around(&mut rng, c, 0.05)));
    }
    for (label, c) in OUTLIER_LABELS.iter().zip(&ood_centres) {
        text_rows.push((RowMeta::new(*label, None), around(&mut rng, c, 0.3)));
    }
    let text = EmbeddingTable::from_rows(DIM, text_rows).unwrap();

    let id_rows = (0..SAMPLES_PER_SIDE).map(|i| {
        let c = &id_centres[i % 3];
        (RowMeta::new(format!("id-{i:03}"), Some(Group::Id)), around(&mut rng, c, 0.9))
    });
    let id_images = EmbeddingTable::from_rows(DIM, id_rows.collect::<Vec<_>>()).unwrap();
    let ood_rows = (0..SAMPLES_PER_SIDE).map(|i| {
        let c = &ood_centres[i % 2];
        (RowMeta::new(format!("ood-{i:03}"), Some(Group::Ood)), around(&mut rng, c, 0.9))
    });
    let ood_images = EmbeddingTable::from_rows(DIM, ood_rows.collect::<Vec<_>>()).unwrap();
    Geometry {
        text,
        id_images,
        ood_images,
    }
}

pub fn far_prompt() -> String {
    let spec = PromptSpec::new(
        PromptMode::Far,
        LabelSet::id(ID_LABELS).unwrap(),
        Some(OUTLIER_LABELS.len()),
        None,
        None,
    )
    .unwrap();
    build_prompts(&spec).remove(0)
}

/// Canned answers per run; the last one also repeats an ID label to exercise hygiene.
pub fn canned_responses() -> Vec<String> {
    vec![
        "- wolf\n- lighthouse\n".to_owned(),
        "- Wolf\n- lighthouse\n- wolf\n".to_owned(),
        "- Husky Dog\n- lighthouse\n- wolf\n".to_owned(),
    ]
}

fn json_file(path: &Path, value: &serde_json::Value) {
    let mut bytes = serde_json::to_vec_pretty(value).unwrap();
    bytes.push(b'\n');
    fs::write(path, bytes).unwrap();
}

/// Writes bundles, labels, the replay cache and two configs (planted, baseline) to `dir`.
pub fn write_fixture(dir: &Path) {
    fs::create_dir_all(dir.join("images")).unwrap();
    let g = geometry();
    write_bundle(&g.text, dir.join("text.manifest.json")).unwrap();
    write_bundle(&g.id_images, dir.join("images/id.manifest.json")).unwrap();
    write_bundle(&g.ood_images, dir.join("images/ood.manifest.json")).unwrap();
    json_file(&dir.join("id_labels.json"), &serde_json::json!(ID_LABELS));

    let client = LlmClient::new(
        EndpointConfig::new(BASE_URL, MODEL),
        ResponseCache::new(dir.join("cache")),
        true,
    );
    let prompt = far_prompt();
    for (run, response) in canned_responses().into_iter().enumerate() {
        let key = client.key_for(&prompt, run, 0);
        client
            .cache()
            .put(
                &key,
                &CacheEntry {
                    prompt: prompt.clone(),
                    model: MODEL.into(),
                    response,
                },
            )
            .unwrap();
    }

    let base = serde_json::json!({
        "id_labels": "id_labels.json",
        "id_bundle": "images/id.manifest.json",
        "ood_bundles": [{"name": "synthetic-ood", "path": "images/ood.manifest.json"}],
        "text_bundle": "text.manifest.json",
        "runs": RUNS,
        "output_dir": "out"
    });
    let mut planted = base.clone();
    let extra = serde_json::json!({
        "mode": "far",
        "L": OUTLIER_LABELS.len(),
        "endpoint": {"base_url": BASE_URL, "model": MODEL},
        "replay": true,
        "cache_dir": "cache",
        "score": {"function": "eoe", "beta": 0.25}
    });
    planted
        .as_object_mut()
        .unwrap()
        .extend(extra.as_object().unwrap().clone());
    json_file(&dir.join("config.json"), &planted);
    json_file(&dir.join("config_baseline.json"), &base);
}

/// Every file under `dir`, relative path and bytes, sorted by path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                if path.file_name().is_some_and(|n| n == "out") {
                    continue;
                }
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}
