//! Mean scores and Bonferroni-corrected signed-rank tests for a simulated rater.

use std::collections::BTreeMap;

use bonelabel::rating::{rating_stats, BlindingKey, KeyEntry, RatingRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> bonelabel::Result<()> {
    let methods = [("m0", "initial", 1.4), ("m1", "registration", 0.9), ("m2", "refined", 2.4)];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut items = Vec::new();
    let mut records = Vec::new();
    for frame in 0..40u32 {
        for (blind, name, mu) in methods {
            let item_id = format!("{frame}-{blind}");
            let score = (mu + rng.random_range(-1.0..1.0f64)).round().clamp(0.0, 3.0) as u8;
            items.push(KeyEntry { item_id: item_id.clone(), frame_id: frame, method: name.into() });
            records.push(RatingRecord {
                rater_id: "sim".into(),
                session_id: "s".into(),
                item_id,
                frame_id: frame,
                blinded_method_id: blind.into(),
                score,
                timestamp_ms: records.len() as u64,
            });
        }
    }
    let key = BlindingKey {
        session_id: "s".into(),
        methods: methods.iter().map(|(b, n, _)| (b.to_string(), n.to_string())).collect::<BTreeMap<_, _>>(),
        items,
    };
    let s = rating_stats(&records, &key, None)?;
    for m in &s.methods {
        println!("{:>12}: mean {:.2} (n = {})", m.method, m.mean, m.n);
    }
    for c in &s.comparisons {
        println!(
            "{} vs {}: W {:?}, p {:?}, adjusted {:?} ({:?})",
            c.a, c.b, c.w, c.p_value, c.p_adjusted, c.p_method
        );
    }
    Ok(())
}
