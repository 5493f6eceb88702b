//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::time::Instant;

use proptest::test_runner::{Config as PropConfig, TestCaseError, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sunac::analysis::compare_report;
use sunac::assignment::{
    best_assignment, magnitude_mask_reconstruct, restricted_permutations, si_sdr, si_sdr_unclamped, SourceSet,
};
use sunac::codec::{encode, init_weights, ArchFamily, FeatureMap, ModelConfig};
use sunac::extractor::{cross_prompt, extract, film, ExtractorWeights, FilmWeights, PromptBank, PromptSpec, PromptType};
use sunac::fixtures::{make_mixture, FixtureSpec, Generator};
use sunac::numerics::{Matrix, MatrixView, StftConfig};
use sunac::pipeline::Pipeline;
use sunac::rvq::{codes_to_features, quantize, Codebook, RvqWeights};
use sunac::stream::CodeStream;
use sunac::AudioBuffer;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lib<T>(r: sunac::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn noise(rng: &mut ChaCha8Rng, len: usize) -> Vec<f32> {
    (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

fn buffer(samples: Vec<f32>) -> AudioBuffer {
    AudioBuffer::new(samples, 16_000).unwrap()
}

// 1
fn token_rate() -> Outcome {
    let config = ModelConfig::preset(ArchFamily::Sunac);
    let weights = init_weights(&config, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let one_second = buffer(noise(&mut rng, 16_000).iter().map(|v| 0.1 * v).collect());
    let frames = lib(encode(&one_second, &config, &weights))?.frames();
    check(frames == 50, || format!("1.0 s gave {frames} frames"))?;

    let tiny = ModelConfig::tiny(ArchFamily::Sunac);
    let tiny_weights = init_weights(&tiny, 2);
    let mut runner = TestRunner::new(PropConfig {
        cases: 48,
        failure_persistence: None,
        ..PropConfig::default()
    });
    runner
        .run(&(320usize..=160_000), |len| {
            let audio = buffer((0..len).map(|i| 0.1 * (i as f32 * 0.01).sin()).collect());
            let f = encode(&audio, &tiny, &tiny_weights).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let expected = len.div_ceil(320);
            if f.frames() != expected {
                return Err(TestCaseError::fail(format!("{len} samples: {} frames, want {expected}", f.frames())));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("1.0 s -> 50 frames; ceil(L/320) for 48 lengths in 0.02..10 s".into())
}

// 2
fn bitrate() -> Outcome {
    let c = ModelConfig::preset(ArchFamily::Sunac);
    check(c.n_codebooks == 12, || format!("{} codebooks", c.n_codebooks))?;
    check(c.bits_per_code() == 10, || format!("{} bits", c.bits_per_code()))?;
    check(c.token_rate() == 50, || format!("{} Hz", c.token_rate()))?;
    check(c.bitrate_bps() == 6000, || format!("{} bit/s", c.bitrate_bps()))?;
    Ok("12 x 10 bit x 50 Hz = 6000 bit/s".into())
}

// 3
fn table_reproduction() -> Outcome {
    // (name, params M, const G, per-source G)
    let published: [(&str, f64, Option<f64>, f64); 5] = [
        ("DAC", 74.10, None, 41.00),
        ("DACT", 66.42, None, 12.88),
        ("SDCodec", 74.82, Some(12.56), 28.44),
        ("SDCodecT", 67.06, Some(3.91), 8.95),
        ("SUNAC", 69.17, Some(3.50), 9.45),
    ];
    let report = lib(compare_report(1.0, 1))?;
    let within = |got: f64, want: f64, tol: f64| ((got - want) / want).abs() <= tol;
    let mut worst = 0.0f64;
    for (name, params, konst, per) in published {
        let row = report.row(name).ok_or_else(|| format!("no row for {name}"))?;
        let p = row.params as f64 / 1e6;
        let c = row.const_macs as f64 / 1e9;
        let s = row.per_source_macs as f64 / 1e9;
        check(within(p, params, 0.05), || format!("{name} params {p:.2} M vs {params}"))?;
        check(within(s, per, 0.20), || format!("{name} per-source {s:.2} G vs {per}"))?;
        worst = worst.max(((s - per) / per).abs());
        match konst {
            Some(k) => {
                check(within(c, k, 0.20), || format!("{name} const {c:.2} G vs {k}"))?;
                worst = worst.max(((c - k) / k).abs());
            }
            None => check(row.const_macs == 0, || format!("{name} const {c:.2} G, want 0"))?,
        }
    }
    for n in 1..=3u64 {
        let r = lib(compare_report(1.0, n))?;
        let (su, sd) = (r.row("SUNAC").unwrap(), r.row("SDCodec").unwrap());
        check(su.const_macs < sd.const_macs, || "SUNAC const >= SDCodec const".into())?;
        check(su.total_macs < sd.total_macs, || format!("SUNAC total >= SDCodec total at N={n}"))?;
    }
    Ok(format!("all within tolerance (worst MAC deviation {:.1}%), orderings hold for N=1..3", worst * 100.0))
}

/// SI-SDR as `10 log10(<s,e>^2 / (|s|^2 |e|^2 - <s,e>^2))`, clamped like the
/// library value.
fn si_sdr_oracle(s: &[f32], e: &[f32]) -> f64 {
    let dot: f64 = s.iter().zip(e).map(|(&a, &b)| a as f64 * b as f64).sum();
    let ss: f64 = s.iter().map(|&a| a as f64 * a as f64).sum();
    let ee: f64 = e.iter().map(|&a| a as f64 * a as f64).sum();
    let v = 10.0 * (dot * dot / (ss * ee - dot * dot)).log10();
    if v.is_nan() {
        -100.0
    } else {
        v.clamp(-100.0, 100.0)
    }
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in all_permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Type-preserving permutations by filtering all `n!` orderings.
fn filtered_permutations(types: &[PromptType]) -> Vec<Vec<usize>> {
    let mut v: Vec<Vec<usize>> = all_permutations(types.len())
        .into_iter()
        .filter(|p| p.iter().enumerate().all(|(i, &j)| types[i] == types[j]))
        .collect();
    v.sort();
    v
}

fn multisets(max_len: usize) -> Vec<Vec<PromptType>> {
    fn grow(start: usize, left: usize, cur: &mut Vec<PromptType>, out: &mut Vec<Vec<PromptType>>) {
        if !cur.is_empty() {
            out.push(cur.clone());
        }
        if left == 0 {
            return;
        }
        for k in start..4 {
            cur.push(PromptType::ALL[k]);
            grow(k, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    grow(0, max_len, &mut Vec::new(), &mut out);
    out
}

// 4
fn pit_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let sets = multisets(4);
    let mut instances = 0;
    let mut non_identity = 0;
    for types in &sets {
        let perms = filtered_permutations(types);
        for _ in 0..200 {
            let mut order = types.clone();
            order.shuffle(&mut rng);
            let refs: Vec<AudioBuffer> = order.iter().map(|_| buffer(noise(&mut rng, 48))).collect();
            let ests: Vec<AudioBuffer> = (0..refs.len())
                .map(|_| {
                    let w: Vec<f32> = refs.iter().map(|_| rng.random_range(0.0f32..1.0)).collect();
                    buffer(
                        (0..48)
                            .map(|t| {
                                let blend: f32 = refs.iter().zip(&w).map(|(r, &a)| a * r.samples()[t]).sum();
                                blend + rng.random_range(-0.5f32..0.5)
                            })
                            .collect(),
                    )
                })
                .collect();
            let set = lib(SourceSet::new(refs.iter().cloned().zip(order.iter().copied()).collect()))?;
            let got = lib(best_assignment(&set, &ests))?;
            let perms = if &order == types { perms.clone() } else { filtered_permutations(&order) };
            let mut best: Option<(Vec<usize>, f64)> = None;
            for p in perms {
                let total: f64 = p
                    .iter()
                    .enumerate()
                    .map(|(i, &j)| si_sdr_oracle(refs[i].samples(), ests[j].samples()))
                    .sum();
                if best.as_ref().is_none_or(|(_, b)| total > *b + 1e-9) {
                    best = Some((p, total));
                }
            }
            let (want, score) = best.unwrap();
            if want.iter().enumerate().any(|(i, &j)| i != j) {
                non_identity += 1;
            }
            check(got.permutation == want, || {
                format!("{order:?}: got {:?}, oracle {want:?}", got.permutation)
            })?;
            check((got.score - score).abs() < 1e-6, || format!("score {} vs {score}", got.score))?;
            instances += 1;
        }
    }

    let layouts: [&[PromptType]; 4] = [
        &[PromptType::Speech, PromptType::Speech],
        &[PromptType::Speech, PromptType::Speech, PromptType::Music],
        &[PromptType::Speech, PromptType::Music, PromptType::Sfx],
        &[PromptType::Speech, PromptType::Speech, PromptType::Music, PromptType::Sfx],
    ];
    let generators = [Generator::HarmonicTone, Generator::BandLimitedNoise, Generator::ChirpBurst];
    let mut recovered = 0;
    let mut trials = 0;
    for (li, layout) in layouts.iter().enumerate() {
        for trial in 0..10u64 {
            let specs: Vec<FixtureSpec> = layout
                .iter()
                .enumerate()
                .map(|(i, &p)| FixtureSpec::new(p, generators[(i + trial as usize) % 3], 100 * li as u64 + 10 * trial + i as u64, 0.25))
                .collect();
            let set = lib(make_mixture(&specs, 16_000, true))?;
            let admissible = restricted_permutations(&set.types());
            let sigma = &admissible[rng.random_range(0..admissible.len())];
            let mut ests = vec![lib(AudioBuffer::silence(set.len_samples(), 16_000))?; set.len()];
            for (i, &j) in sigma.iter().enumerate() {
                ests[j] = set.source(i).clone();
            }
            let got = lib(best_assignment(&set, &ests))?;
            trials += 1;
            if &got.permutation == sigma {
                recovered += 1;
            }
        }
    }
    check(recovered == trials, || format!("recovered {recovered}/{trials} generating permutations"))?;
    Ok(format!(
        "{instances} random instances ({non_identity} non-identity optima) over {} multisets match the oracle; {recovered}/{trials} copy-permuted fixtures recovered",
        sets.len()
    ))
}

// 5
fn permutation_counts() -> Outcome {
    let fact = |n: usize| (1..=n).product::<usize>();
    let mut checked = 0;
    for types in multisets(5) {
        let mut counts: BTreeMap<PromptType, usize> = BTreeMap::new();
        for &t in &types {
            *counts.entry(t).or_default() += 1;
        }
        let want: usize = counts.values().map(|&m| fact(m)).product();
        let mut order = types.clone();
        order.reverse();
        for layout in [&types, &order] {
            let perms = restricted_permutations(layout);
            check(perms.len() == want, || format!("{layout:?}: {} permutations, want {want}", perms.len()))?;
            check(perms == filtered_permutations(layout), || format!("{layout:?}: set differs from brute force"))?;
        }
        checked += 1;
    }
    Ok(format!("{checked} multisets of size 1..5 give prod(m!)"))
}

// 6
fn si_sdr_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    for _ in 0..100 {
        let s = noise(&mut rng, 256);
        let e: Vec<f32> = s.iter().map(|&v| v + 0.3 * rng.random_range(-1.0f32..1.0)).collect();
        let base = lib(si_sdr_unclamped(&s, &e))?;
        for k in [-6, -1, 1, 3, 9] {
            let a = 2f32.powi(k);
            let scaled: Vec<f32> = e.iter().map(|&v| v * a).collect();
            let v = lib(si_sdr_unclamped(&s, &scaled))?;
            check(v == base, || format!("scale 2^{k}: {v} != {base}"))?;
        }
        let a: f32 = rng.random_range(0.01..100.0);
        let scaled: Vec<f32> = e.iter().map(|&v| v * a).collect();
        let v = lib(si_sdr_unclamped(&s, &scaled))?;
        check((v - base).abs() < 1e-4, || format!("scale {a}: {v} vs {base}"))?;
    }

    let n = 1024;
    let s: Vec<f32> = (0..n).map(|i| (2.0 * std::f32::consts::PI * 8.0 * i as f32 / n as f32).sin()).collect();
    let o: Vec<f32> = (0..n).map(|i| (2.0 * std::f32::consts::PI * 8.0 * i as f32 / n as f32).cos()).collect();
    let e: Vec<f32> = s.iter().zip(&o).map(|(a, b)| a + b).collect();
    let orth = lib(si_sdr_unclamped(&s, &e))?;
    check(orth.abs() < 1e-3, || format!("orthogonal equal-power gave {orth} dB"))?;

    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let len = rng.random_range(16..512);
        let s = noise(&mut rng, len);
        let level: f32 = rng.random_range(0.01..3.0);
        let e: Vec<f32> = s.iter().map(|&v| v + level * rng.random_range(-1.0f32..1.0)).collect();
        let got = lib(si_sdr(&buffer(s.clone()), &buffer(e.clone())))?;
        worst = worst.max((got - si_sdr_oracle(&s, &e)).abs());
    }
    check(worst < 1e-6, || format!("oracle disagreement {worst:e} dB"))?;
    Ok(format!("power-of-two scales bit-exact; orthogonal case {orth:.2e} dB; oracle max error {worst:.1e} dB"))
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f32) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

// 7
fn rvq_properties() -> Outcome {
    let config = ModelConfig::tiny(ArchFamily::Sunac);
    let weights = init_weights(&config, 70);
    let rvq = lib(RvqWeights::from_store(&weights, &config, 0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let f = rvq.features();
    for _ in 0..1000 {
        let column = random_matrix(&mut rng, f, 1, 1.0);
        let features = lib(FeatureMap::new(column.clone()))?;
        let q = lib(quantize(&features, &rvq, config.n_codebooks))?;
        let start: f64 = lib(rvq.project(column.data()))?.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut prev = start;
        for (k, &norm) in q.residual_norms.iter().enumerate() {
            check(norm <= prev, || format!("residual grew at layer {k}: {prev} -> {norm}"))?;
            prev = norm;
        }
    }

    let d = 6;
    let mut books = Vec::new();
    for _ in 0..3 {
        let mut m = random_matrix(&mut rng, 32, d, 1.0);
        m.row_mut(0).fill(0.0);
        books.push(lib(Codebook::new(m))?);
    }
    let identity = Matrix::from_fn(d, d, |r, c| if r == c { 1.0 } else { 0.0 });
    let exact = lib(RvqWeights::new(books.clone(), identity.clone(), vec![0.0; d], identity, vec![0.0; d]))?;
    let target = books[0].entry(17).to_vec();
    let features = lib(FeatureMap::new(lib(Matrix::from_vec(d, 1, target.clone()))?))?;
    let q = lib(quantize(&features, &exact, 3))?;
    check(q.codes.column(0) == vec![17, 0, 0], || format!("codes {:?}", q.codes.column(0)))?;
    check(q.residual_norms.iter().all(|&n| n == 0.0), || format!("norms {:?}", q.residual_norms))?;
    check(q.quantized.values().data() == target.as_slice(), || "reconstruction not exact".into())?;

    let mut dup = random_matrix(&mut rng, 64, d, 1.0);
    let copy = dup.row(5).to_vec();
    dup.row_mut(40).copy_from_slice(&copy);
    let book = lib(Codebook::new(dup))?;
    for trial in 0..2000 {
        let t: Vec<f64> = if trial % 10 == 0 {
            copy.iter().map(|&v| v as f64).collect()
        } else {
            (0..d).map(|_| rng.random_range(-1.5..1.5)).collect()
        };
        let mut best = (usize::MAX, f64::INFINITY);
        for i in 0..book.n_entries() {
            let dist: f64 = book.entry(i).iter().zip(&t).map(|(&e, &x)| (x - e as f64).powi(2)).sum();
            if dist < best.1 {
                best = (i, dist);
            }
        }
        let (idx, _) = book.nearest(&t);
        check(idx == best.0, || format!("nearest {idx}, scan {}", best.0))?;
    }

    let batch = lib(FeatureMap::new(random_matrix(&mut rng, f, 40, 1.0)))?;
    let q1 = lib(quantize(&batch, &rvq, config.n_codebooks))?;
    let q2 = lib(quantize(&batch, &rvq, config.n_codebooks))?;
    let decoded = lib(codes_to_features(&q1.codes, &rvq))?;
    let stream = lib(CodeStream::new(16_000, 10, 40 * 320, vec![PromptType::Mix], vec![q1.codes.clone()]))?;
    let back = lib(CodeStream::from_bytes(&stream.to_bytes()))?;
    let redecoded = lib(codes_to_features(&back.codes[0], &rvq))?;
    let bits = |m: &FeatureMap| m.values().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    check(q1.codes == q2.codes, || "quantization not repeatable".into())?;
    check(bits(&decoded) == bits(&q1.quantized), || "dequantized differs from quantized".into())?;
    check(bits(&redecoded) == bits(&q1.quantized), || "stream round trip changed features".into())?;
    Ok("monotone on 1000 frames; exact match -> zero residual; argmin == scan; round trip bit-stable".into())
}

// 8
fn film_anchor() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    let (f, p, t) = (12, 7, 30);
    let x = lib(FeatureMap::new(random_matrix(&mut rng, f, t, 2.0)))?;
    let prompt: Vec<f32> = noise(&mut rng, p);
    let zeros_w = vec![0.0f32; f * p];
    let zeros_b = vec![0.0f32; f];
    let zero = FilmWeights {
        scale: lib(MatrixView::new(f, p, &zeros_w))?,
        scale_bias: &zeros_b,
        shift: lib(MatrixView::new(f, p, &zeros_w))?,
        shift_bias: &zeros_b,
    };
    let same = lib(film(&x, &prompt, &zero))?;
    check(same.values() == x.values(), || "zero FiLM changed the input".into())?;

    let (ws, bs) = (random_matrix(&mut rng, f, p, 0.5), noise(&mut rng, f));
    let (wh, bh) = (random_matrix(&mut rng, f, p, 0.5), noise(&mut rng, f));
    let weights = FilmWeights {
        scale: ws.view(),
        scale_bias: &bs,
        shift: wh.view(),
        shift_bias: &bh,
    };
    let out = lib(film(&x, &prompt, &weights))?;
    let mut worst = 0.0f64;
    for r in 0..f {
        let gamma: f64 = bs[r] as f64 + (0..p).map(|c| ws.get(r, c) as f64 * prompt[c] as f64).sum::<f64>();
        let beta: f64 = bh[r] as f64 + (0..p).map(|c| wh.get(r, c) as f64 * prompt[c] as f64).sum::<f64>();
        for c in 0..t {
            let xv = x.values().get(r, c) as f64;
            let want = xv + gamma * xv + beta;
            worst = worst.max((out.values().get(r, c) as f64 - want).abs());
        }
    }
    check(worst < 1e-6, || format!("oracle disagreement {worst:e}"))?;
    Ok(format!("zero weights bit-exact identity; elementwise oracle max error {worst:.1e}"))
}

// 9
fn prompt_positions() -> Outcome {
    let config = ModelConfig::tiny(ArchFamily::Sunac);
    let weights = init_weights(&config, 90);
    let bank = lib(PromptBank::from_store(&weights))?;
    let ew = lib(ExtractorWeights::from_store(&weights, &config))?;
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    let x = lib(encode(&buffer(noise(&mut rng, 6400).iter().map(|v| 0.2 * v).collect()), &config, &weights))?;
    let mut least = (f32::INFINITY, f32::INFINITY);
    for list in ["speech,speech", "speech,speech,music", "music,sfx,sfx", "speech,music,speech,sfx"] {
        let prompts = lib(PromptSpec::parse(list))?;
        let (_, p_prime) = lib(cross_prompt(&x, &prompts, &bank, &ew))?;
        let maps = lib(extract(&x, &prompts, &bank, &ew))?;
        let types = prompts.types();
        for i in 0..types.len() {
            for j in i + 1..types.len() {
                if types[i] != types[j] {
                    continue;
                }
                let dp = p_prime
                    .column(i)
                    .iter()
                    .zip(p_prime.column(j))
                    .fold(0.0f32, |m, (a, b)| m.max((a - b).abs()));
                let dm = maps[i].values().max_abs_diff(maps[j].values());
                check(dp > 1e-6 && dm > 1e-6, || format!("{list}: prompts {i},{j} differ by {dp:e} / {dm:e}"))?;
                least = (least.0.min(dp), least.1.min(dm));
            }
        }
    }
    Ok(format!(
        "duplicate prompts differ: transformed >= {:.2e}, extracted >= {:.2e}",
        least.0, least.1
    ))
}

// 10
fn determinism() -> Outcome {
    let config = ModelConfig::tiny(ArchFamily::Sunac);
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let audio = buffer(noise(&mut rng, 7777).iter().map(|v| 0.3 * v).collect());
    let prompts = lib(PromptSpec::parse("speech,speech,sfx"))?;
    let run = || -> Result<(Vec<u8>, Vec<Vec<u8>>), String> {
        let pipeline = lib(Pipeline::from_seed(config.clone(), 5))?;
        let stream = lib(pipeline.encode(&audio, &prompts))?;
        let bytes = stream.to_bytes();
        let decoded = lib(pipeline.decode(&lib(CodeStream::from_bytes(&bytes))?))?;
        let pcm = decoded
            .iter()
            .map(|a| a.samples().iter().flat_map(|v| v.to_le_bytes()).collect())
            .collect();
        Ok((bytes, pcm))
    };
    let (a, b) = (run()?, run()?);
    check(a == b, || "two runs differ".into())?;
    let stream = lib(CodeStream::from_bytes(&a.0))?;
    let (n, q, t) = (3, config.n_codebooks, 7777usize.div_ceil(320));
    let want = 28 + n + 2 * n * q * t;
    check(
        stream.n_sources() == n && stream.n_codebooks() == q && stream.n_frames() == t,
        || format!("shape {}x{}x{}", stream.n_sources(), stream.n_codebooks(), stream.n_frames()),
    )?;
    check(a.0.len() == want && stream.byte_len() == want, || format!("{} bytes, want {want}", a.0.len()))?;
    check(a.1.iter().all(|p| p.len() == 4 * 7777), || "decoded length mismatch".into())?;
    Ok(format!("two runs byte-identical; stream is 28 + {n} + 2*{n}*{q}*{t} = {want} bytes"))
}

// 11
fn masked_evaluation() -> Outcome {
    let cfg = StftConfig::new(1024, 256);
    let layouts: [&[(PromptType, Generator)]; 3] = [
        &[(PromptType::Speech, Generator::HarmonicTone), (PromptType::Music, Generator::HarmonicTone), (PromptType::Sfx, Generator::BandLimitedNoise)],
        &[(PromptType::Speech, Generator::BandLimitedNoise), (PromptType::Speech, Generator::HarmonicTone), (PromptType::Music, Generator::ChirpBurst)],
        &[(PromptType::Music, Generator::BandLimitedNoise), (PromptType::Sfx, Generator::ChirpBurst)],
    ];
    let mut lowest = f64::INFINITY;
    for (k, layout) in layouts.iter().enumerate() {
        let specs: Vec<FixtureSpec> = layout
            .iter()
            .enumerate()
            .map(|(i, &(p, g))| FixtureSpec::new(p, g, 1000 + 10 * k as u64 + i as u64, 1.0))
            .collect();
        let set = lib(make_mixture(&specs, 16_000, false))?;
        let mix = set.mixture().unwrap().clone();
        for i in 0..set.len() {
            let rebuilt = lib(magnitude_mask_reconstruct(&mix, set.source(i), &cfg))?;
            let v = lib(si_sdr(set.source(i), &rebuilt))?;
            check(v > 30.0, || format!("layout {k} source {i}: {v:.2} dB"))?;
            lowest = lowest.min(v);
        }
        let through = lib(magnitude_mask_reconstruct(&mix, &mix, &cfg))?;
        let rms = (through
            .samples()
            .iter()
            .zip(mix.samples())
            .map(|(a, b)| ((a - b) as f64).powi(2))
            .sum::<f64>()
            / mix.len() as f64)
            .sqrt();
        check(rms < 1e-3, || format!("layout {k}: pass-through error {rms:e} RMS"))?;
    }
    Ok(format!("lowest masked SI-SDR {lowest:.1} dB; mixture pass-through within 1e-3 RMS"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("token rate", token_rate),
        ("bitrate", bitrate),
        ("cost table", table_reproduction),
        ("assignment oracle", pit_oracle),
        ("permutation counts", permutation_counts),
        ("si-sdr properties", si_sdr_properties),
        ("rvq properties", rvq_properties),
        ("film anchor", film_anchor),
        ("prompt positions", prompt_positions),
        ("determinism", determinism),
        ("masked evaluation", masked_evaluation),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({secs:.1}s) {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({secs:.1}s) {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
