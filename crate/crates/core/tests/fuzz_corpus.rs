//! Replays the fuzz corpus and a few thousand deterministic mutations of it
//! through the same bodies as the fuzz targets.

use std::path::PathBuf;

use snls_core::config::SimConfig;
use snls_core::exponents::parse_rational;
use snls_core::grid::ComplexField;
use snls_core::io::{exponent_row, parse_exponent_table};
use snls_core::noise::CounterRng;

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<Vec<u8>> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| std::fs::read(e.unwrap().path()).unwrap())
        .collect();
    out.sort();
    assert!(!out.is_empty(), "empty corpus for {target}");
    out
}

fn mutate(input: &[u8], rng: &mut CounterRng) -> Vec<u8> {
    let mut v = input.to_vec();
    let pick = |rng: &mut CounterRng, n: usize| ((rng.next_uniform() * n as f64) as usize).min(n.saturating_sub(1));
    for _ in 0..1 + pick(rng, 4) {
        match pick(rng, 4) {
            0 if !v.is_empty() => {
                let i = pick(rng, v.len());
                v[i] ^= 1 << pick(rng, 8);
            }
            1 if !v.is_empty() => {
                let i = pick(rng, v.len());
                v.truncate(i);
            }
            2 => {
                let i = pick(rng, v.len() + 1);
                v.insert(i, b"0123456789-./,{}[]\":eE"[pick(rng, 22)]);
            }
            _ if !v.is_empty() => {
                let i = pick(rng, v.len());
                v.remove(i);
            }
            _ => v.push(b'1'),
        }
    }
    v
}

fn replay(target: &str, body: impl Fn(&[u8])) {
    let corpus = seeds(target);
    let mut rng = CounterRng::new(0xf022, 0);
    for s in &corpus {
        body(s);
    }
    for k in 0..3000 {
        body(&mutate(&corpus[k % corpus.len()], &mut rng));
    }
}

#[test]
fn parse_config_corpus() {
    replay("parse_config", |data| {
        let Ok(text) = std::str::from_utf8(data) else { return };
        if let Ok(config) = SimConfig::from_json(text) {
            assert_eq!(SimConfig::from_json(&config.to_json()).unwrap(), config);
        }
    });
}

#[test]
fn decode_field_corpus() {
    replay("decode_field", |data| {
        if let Ok(field) = ComplexField::from_bytes(data) {
            assert_eq!(field.to_bytes(), data);
        }
    });
}

#[test]
fn parse_rational_corpus() {
    replay("parse_rational", |data| {
        let Ok(text) = std::str::from_utf8(data) else { return };
        if let Ok(r) = parse_rational(text) {
            assert_eq!(parse_rational(&r.to_string()).unwrap(), r);
        }
    });
}

#[test]
fn parse_exponent_table_corpus() {
    replay("parse_exponent_table", |data| {
        let Ok(text) = std::str::from_utf8(data) else { return };
        if let Ok(rows) = parse_exponent_table(text) {
            for (d, alpha, gamma) in rows {
                let _ = exponent_row(d, alpha, gamma);
            }
        }
    });
}

#[test]
fn corpus_seeds_cover_valid_inputs() {
    assert!(seeds("parse_config").iter().any(|s| SimConfig::from_json(std::str::from_utf8(s).unwrap()).is_ok()));
    assert!(seeds("decode_field").iter().any(|s| ComplexField::from_bytes(s).is_ok()));
    assert!(seeds("parse_exponent_table").iter().any(|s| parse_exponent_table(std::str::from_utf8(s).unwrap()).is_ok()));
}
