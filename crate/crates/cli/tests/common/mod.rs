#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use groundseg::dataset::{
    FilterRule, ImageRecord, ObjectRecord, PartRecord, QAPair, QuestionCategory, SampleSet, SamplingStrategy,
};
use groundseg::mask::{rle_encode, BinaryMask};
use groundseg::metrics::{EvalSample, ImageSize, TargetEntry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn groundseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_groundseg"))
        .args(args)
        .output()
        .expect("spawn groundseg")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

pub fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) {
    let mut s = String::new();
    for i in items {
        s.push_str(&serde_json::to_string(i).unwrap());
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const PHRASES: [&str; 8] = ["red cup", "blue mug", "wooden table", "table", "small lamp", "lamp", "cup", "old chair"];
const SENTENCES: [&str; 4] = [
    "the cup on the left is larger than the mug",
    "both tables are made of wood",
    "a lamp stands next to the old chair",
    "the red cup sits on the wooden table",
];

fn random_mask(rng: &mut ChaCha8Rng, h: u32, w: u32) -> BinaryMask {
    let (r0, c0) = (rng.random_range(0..h), rng.random_range(0..w));
    let (r1, c1) = (rng.random_range(r0..h), rng.random_range(c0..w));
    BinaryMask::from_fn(h, w, |r, c| (r0..=r1).contains(&r) && (c0..=c1).contains(&c)).unwrap()
}

fn jitter(rng: &mut ChaCha8Rng, m: &BinaryMask) -> BinaryMask {
    let (h, w) = m.shape();
    BinaryMask::from_fn(h, w, |r, c| if rng.random_bool(0.1) { !m.get(r, c) } else { m.get(r, c) }).unwrap()
}

/// Samples with 1-3 images, 1-4 GT targets and noisy predictions.
pub fn synthetic_samples(n: usize, seed: u64) -> Vec<EvalSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let n_img = rng.random_range(1..=3);
            let images: Vec<ImageSize> = (0..n_img)
                .map(|_| ImageSize {
                    height: rng.random_range(4..=12),
                    width: rng.random_range(4..=12),
                })
                .collect();
            let mut gt = Vec::new();
            let mut pred = Vec::new();
            for _ in 0..rng.random_range(1..=4) {
                let image = rng.random_range(1..=n_img);
                let size = images[image as usize - 1];
                let mask = random_mask(&mut rng, size.height, size.width);
                let phrase = PHRASES[rng.random_range(0..PHRASES.len())];
                if rng.random_bool(0.8) {
                    pred.push(TargetEntry {
                        image_index: image,
                        phrase: if rng.random_bool(0.7) { phrase } else { PHRASES[rng.random_range(0..PHRASES.len())] }
                            .to_string(),
                        mask: rle_encode(&jitter(&mut rng, &mask)),
                    });
                }
                gt.push(TargetEntry {
                    image_index: image,
                    phrase: phrase.to_string(),
                    mask: rle_encode(&mask),
                });
            }
            if rng.random_bool(0.3) {
                let image = rng.random_range(1..=n_img);
                let size = images[image as usize - 1];
                pred.push(TargetEntry {
                    image_index: image,
                    phrase: "lamp".into(),
                    mask: rle_encode(&random_mask(&mut rng, size.height, size.width)),
                });
            }
            EvalSample {
                sample_id: format!("s{i:04}"),
                images,
                question: "What do the images share?".into(),
                gt,
                pred,
                gt_sentence: SENTENCES[rng.random_range(0..SENTENCES.len())].into(),
                pred_sentence: format!(
                    "The <p>{}</p> [SEG] (IMAGE1) {}",
                    PHRASES[rng.random_range(0..PHRASES.len())],
                    SENTENCES[rng.random_range(0..SENTENCES.len())]
                ),
            }
        })
        .collect()
}

fn object(name: &str, object_id: u8) -> ObjectRecord {
    ObjectRecord {
        name: name.into(),
        object_id,
        bbox: [0.0, 0.0, 10.0, 10.0],
        mask_ref: Some(format!("{name}-{object_id}")),
        parts: Vec::new(),
    }
}

fn image(id: &str, feature: [f32; 3], objects: Vec<ObjectRecord>) -> ImageRecord {
    ImageRecord {
        image_id: id.into(),
        height: 32,
        width: 32,
        feature: feature.to_vec(),
        objects,
        source: Some("fixture".into()),
    }
}

pub fn filter_corpus() -> Vec<ImageRecord> {
    let mut table = object("table", 3);
    table.parts.push(PartRecord {
        name: "drawer".into(),
        part_id: 1,
        bbox: [1.0, 1.0, 4.0, 4.0],
        mask_ref: None,
    });
    vec![
        image("A", [1.0, 0.0, 0.0], vec![object("cup", 1), object("plate", 2), table]),
        image("B", [0.9, 0.1, 0.0], vec![object("cup", 1), object("spoon", 2)]),
        image("C", [0.0, 1.0, 0.0], vec![object("mug", 1), object("bowl", 2)]),
        image("D", [0.0, 0.0, 1.0], (1..=9).map(|i| object("box", i)).collect()),
        image("E", [0.1, 0.0, 1.0], (1..=9).map(|i| object("box", i)).collect()),
    ]
}

fn qa(question: &str, answer: &str, ids: &[&str]) -> QAPair {
    QAPair {
        question: question.into(),
        answer: answer.into(),
        category: QuestionCategory::Functional,
        resolved_targets: Vec::new(),
        sample: SampleSet {
            image_ids: ids.iter().map(|s| s.to_string()).collect(),
            strategy: SamplingStrategy::ObjectCategory,
            anchor_id: ids[0].into(),
        },
    }
}

fn boxes(n: usize) -> String {
    let refs: Vec<String> = (0..n).map(|i| format!("box_{}{:02}", 1 + i % 2, 1 + i / 2)).collect();
    format!("The stacked {} form one tall tower.", refs.join(", "))
}

/// Twenty QA pairs with verdicts decided by hand: `None` means kept,
/// otherwise the first rule the pair breaks.
pub fn filter_ledger() -> Vec<(QAPair, Option<FilterRule>)> {
    use FilterRule::*;
    const Q: &str = "What do these images have in common?";
    let ab = &["A", "B"][..];
    let abc = &["A", "B", "C"][..];
    let de = &["D", "E"][..];
    vec![
        (qa(Q, "The cup_101 sits on the plate_102 while the cup_201 is empty.", ab), None),
        (qa(Q, "cup_101 cup_201", ab), Some(EnumerationOnly)),
        (qa(Q, "cup_101 and cup_201 yes", ab), Some(EnumerationOnly)),
        (qa("Which cup is at [10, 20, 30, 40]?", "The cup_101 matches the cup_201 well.", ab), Some(BboxCoordinates)),
        (qa(Q, "The cup_101 at [1, 2, 3, 4] matches cup_201 well.", ab), Some(BboxCoordinates)),
        (qa(Q, "The cup_101 and the plate_102 are on the table.", ab), Some(ImageCoverage)),
        (qa(Q, "The cup_101 and plate_102 are here, the second image has none.", ab), Some(MultiImageMasks)),
        (qa(Q, "The cup_101 matches the cup_201 in color.", abc), Some(ImageCoverage)),
        (qa(Q, "The cup_101, cup_201 and mug_301 hold drinks.", abc), None),
        (qa(Q, "The cup_101 matches the spoon_201 in color.", ab), Some(UnresolvedReference)),
        (qa(Q, "The cup_101 matches the fork_203 nicely.", ab), Some(UnresolvedReference)),
        (qa(Q, "The cup_101 is near the drawer_10301 and cup_201.", ab), None),
        (qa(Q, "The cup_101 and cup_201 in both images are alike.", ab), None),
        (qa(Q, &boxes(16), de), None),
        (qa(Q, &boxes(17), de), Some(MaskCap)),
        (qa(Q, "The cup_101, cup_201 and plate_1020 look alike.", ab), Some(UnresolvedReference)),
        (qa(Q, "Image 1 shows the cup_101 and image 2 shows the cup_201 clearly.", ab), None),
        (qa(Q, "The cup_101, cup_201 and mug_301 look alike.", ab), Some(UnresolvedReference)),
        (qa("Where is [5,5,9,9]?", "cup_101 cup_201", ab), Some(EnumerationOnly)),
        (qa(Q, "Both images show a cup_101 beside a bowl.", ab), Some(MultiImageMasks)),
    ]
}
