//! Seeded generator of COCO-like detection records.
//!
//! Images hold one to eight detections. Classes are skewed toward index 0,
//! box areas are log-uniform with log-normal aspect ratios, and confidence
//! rises with box area and falls slightly with class index, floored at 0.25.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::interchange::DetectionRecord;

const IMAGE_SIZES: [(u32, u32); 5] = [(640, 480), (640, 427), (480, 640), (640, 640), (500, 375)];
const CONF_FLOOR: f64 = 0.25;
const CONF_SPAN: f64 = 0.74;

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// `n` records from a fixed seed; identical inputs give identical output.
pub fn generate(n: usize, seed: u64, with_captions: bool) -> Vec<DetectionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut image = 0usize;
    while out.len() < n {
        let (img_w, img_h) = IMAGE_SIZES[rng.gen_range(0..IMAGE_SIZES.len())];
        let per_image = rng.gen_range(1..=8usize).min(n - out.len());
        let image_id = format!("synth_{image:06}");
        let mut classes = Vec::with_capacity(per_image);
        for _ in 0..per_image {
            let cls: u32 = if rng.gen_bool(0.35) {
                0
            } else {
                let u: f64 = rng.gen();
                (1.0 + 79.0 * u * u).floor().min(79.0) as u32
            };
            let area = (rng.gen_range((5e-4f64).ln()..(0.9f64).ln())).exp();
            let aspect = (0.5 * standard_normal(&mut rng)).exp();
            let w = (area * aspect).sqrt().clamp(0.005, 1.0);
            let h = (area / aspect).sqrt().clamp(0.005, 1.0);
            let x = rng.gen_range(w / 2.0..=1.0 - w / 2.0);
            let y = rng.gen_range(h / 2.0..=1.0 - h / 2.0);
            let logit = 0.6 * (w * h / 0.05).ln() + 0.8 - 0.012 * f64::from(cls)
                + 0.7 * standard_normal(&mut rng);
            let conf = CONF_FLOOR + CONF_SPAN / (1.0 + (-logit).exp());
            classes.push(cls);
            out.push(DetectionRecord {
                image_id: image_id.clone(),
                x,
                y,
                w,
                h,
                conf,
                cls,
                img_w,
                img_h,
                caption: None,
            });
        }
        if with_captions {
            let mut names: Vec<String> = classes.iter().map(|c| format!("object {c}")).collect();
            names.dedup();
            let caption = format!("a photo with {}", names.join(" and "));
            let start = out.len() - per_image;
            for r in &mut out[start..] {
                r.caption = Some(caption.clone());
            }
        }
        image += 1;
    }
    out
}
