use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sunac::analysis::{builtin_spec, builtin_specs, compare_specs, count_macs};
use sunac::assignment::{evaluate, EvalMode};
use sunac::codec::{init_weights, ArchFamily, ModelConfig, WeightStore};
use sunac::extractor::{PromptSpec, PromptType};
use sunac::fixtures::FixtureManifest;
use sunac::io::write_bytes_atomic;
use sunac::numerics::StftConfig;
use sunac::pipeline::Pipeline;
use sunac::stream::CodeStream;
use sunac::{AudioBuffer, Error};

pub const SEED_ENV: &str = "SUNAC_SEED";

#[derive(Parser, Debug)]
#[command(name = "sunac", version, about = "Source-aware neural audio codec")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print a preset model configuration as JSON.
    Config {
        #[arg(long, default_value = "sunac")]
        arch: ArchFamily,
        /// Narrow layers for quick experiments.
        #[arg(long)]
        tiny: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write seeded weights for a configuration.
    Init {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Encode a WAV file into a code stream, one code grid per prompt.
    Encode {
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated prompts: speech, music, sfx, mix.
        #[arg(long, default_value = "mix")]
        prompts: String,
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Decode a code stream into one WAV per source.
    Decode {
        #[command(flatten)]
        model: ModelArgs,
        input: PathBuf,
        /// Output directory.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Dump the continuous per-prompt latents as JSON.
    Extract {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "mix")]
        prompts: String,
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Parameter and MAC report.
    Analyze {
        /// Architecture name, or `all` for the comparison table.
        #[arg(long, default_value = "all")]
        arch: String,
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        #[arg(long, default_value_t = 1)]
        sources: u64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Score decoded sources against fixture references.
    Eval {
        /// Fixture manifest the references were generated from.
        #[arg(long)]
        refs: PathBuf,
        /// Directory holding `*src<N>.wav` estimates.
        #[arg(long)]
        est: PathBuf,
        #[arg(long, default_value = "direct")]
        mode: EvalMode,
        #[arg(long, default_value_t = 1024)]
        n_fft: usize,
        #[arg(long, default_value_t = 256)]
        hop: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Generate the sources and mixture of a fixture manifest.
    Fixtures {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Model configuration JSON; defaults to the `--arch` preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "sunac")]
    arch: ArchFamily,
    /// Weight file; seeded weights are generated when absent.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Seed for generated weights (overridden by SUNAC_SEED).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

impl ModelArgs {
    fn config(&self) -> Result<ModelConfig> {
        let mut config = match &self.config {
            Some(path) => ModelConfig::from_json_file(path)
                .with_context(|| format!("reading config {}", path.display()))?,
            None => ModelConfig::preset(self.arch),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(seed) = seed_from_env()? {
            config.seed = seed;
        }
        Ok(config)
    }

    fn weights(&self, config: &ModelConfig) -> Result<WeightStore> {
        match &self.weights {
            Some(path) => {
                WeightStore::load(path).with_context(|| format!("reading weights {}", path.display()))
            }
            None => Ok(init_weights(config, config.seed)),
        }
    }

    fn pipeline(&self) -> Result<Pipeline> {
        let config = self.config()?;
        let weights = self.weights(&config)?;
        Ok(Pipeline::new(config, weights)?)
    }
}

fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidArgument(format!("{SEED_ENV}={v:?} is not an unsigned integer")).into()),
        Err(_) => Ok(None),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes_atomic(path, text.as_bytes())?;
    Ok(())
}

fn read_wav(path: &Path) -> Result<AudioBuffer> {
    AudioBuffer::read_wav(path).with_context(|| format!("reading {}", path.display()))
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "stream".into())
}

#[derive(Serialize)]
struct SourceEntry {
    index: usize,
    prompt: PromptType,
    file: String,
}

#[derive(Serialize)]
struct DecodeSidecar {
    stream: String,
    sample_rate: u32,
    original_len: u64,
    n_frames: usize,
    n_codebooks: usize,
    sources: Vec<SourceEntry>,
}

#[derive(Serialize)]
struct LatentDump {
    prompt: PromptType,
    features: usize,
    frames: usize,
    /// Row-major `features × frames`.
    values: Vec<f32>,
}

/// Estimates named `…src<N>.wav` in `dir`, ordered by `N`.
fn collect_estimates(dir: &Path) -> Result<Vec<AudioBuffer>> {
    let mut found: Vec<(usize, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(stem) = name.strip_suffix(".wav") else {
            continue;
        };
        let Some(pos) = stem.rfind("src") else {
            continue;
        };
        if pos > 0 && !stem[..pos].ends_with('.') {
            continue;
        }
        if let Ok(index) = stem[pos + 3..].parse::<usize>() {
            found.push((index, path));
        }
    }
    found.sort();
    for (expected, (index, path)) in found.iter().enumerate() {
        if *index != expected {
            return Err(Error::InvalidInput(format!(
                "estimate {} breaks the src0..srcN sequence",
                path.display()
            ))
            .into());
        }
    }
    found.iter().map(|(_, p)| read_wav(p)).collect()
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Config { arch, tiny, output } => {
            let config = if tiny { ModelConfig::tiny(arch) } else { ModelConfig::preset(arch) };
            match output {
                Some(path) => write_json(&path, &config)?,
                None => println!("{}", config.to_json()),
            }
        }
        Command::Init { model, output } => {
            let config = model.config()?;
            config.validate()?;
            let weights = init_weights(&config, config.seed);
            weights.save(&output)?;
            println!(
                "wrote {} tensors ({} parameters, seed {}) to {}",
                weights.tensors().len(),
                weights.numel(),
                weights.seed(),
                output.display()
            );
        }
        Command::Encode {
            model,
            prompts,
            input,
            output,
        } => {
            let prompts = PromptSpec::parse(&prompts)?;
            let audio = read_wav(&input)?;
            let pipeline = model.pipeline()?;
            let stream = pipeline.encode(&audio, &prompts)?;
            stream.write(&output)?;
            println!(
                "{} source(s) x {} codebooks x {} frames -> {} ({} bytes)",
                stream.n_sources(),
                stream.n_codebooks(),
                stream.n_frames(),
                output.display(),
                stream.byte_len()
            );
        }
        Command::Decode { model, input, output } => {
            let stream = CodeStream::read(&input)?;
            let pipeline = model.pipeline()?;
            let sources = pipeline.decode(&stream)?;
            std::fs::create_dir_all(&output)?;
            let stem = file_stem(&input);
            let mut entries = Vec::new();
            for (i, (audio, &prompt)) in sources.iter().zip(&stream.prompts).enumerate() {
                let file = format!("{stem}.src{i}.wav");
                audio.write_wav(output.join(&file))?;
                entries.push(SourceEntry { index: i, prompt, file });
            }
            let sidecar = DecodeSidecar {
                stream: input.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                sample_rate: stream.sample_rate,
                original_len: stream.original_len,
                n_frames: stream.n_frames(),
                n_codebooks: stream.n_codebooks(),
                sources: entries,
            };
            write_json(&output.join(format!("{stem}.json")), &sidecar)?;
            println!("decoded {} source(s) into {}", sources.len(), output.display());
        }
        Command::Extract {
            model,
            prompts,
            input,
            output,
        } => {
            let prompts = PromptSpec::parse(&prompts)?;
            let audio = read_wav(&input)?;
            let pipeline = model.pipeline()?;
            let latents = pipeline.source_features(&audio, &prompts)?;
            let dump: Vec<LatentDump> = latents
                .into_iter()
                .zip(prompts.types())
                .map(|(f, &prompt)| LatentDump {
                    prompt,
                    features: f.features(),
                    frames: f.frames(),
                    values: f.into_matrix().into_vec(),
                })
                .collect();
            write_json(&output, &dump)?;
        }
        Command::Analyze {
            arch,
            duration,
            sources,
            format,
        } => {
            let specs = if arch.eq_ignore_ascii_case("all") {
                builtin_specs()
            } else {
                vec![builtin_spec(&arch)?]
            };
            if specs.len() == 1 && format == Format::Json {
                let report = count_macs(&specs[0], duration, 16_000)?;
                println!("{}", serde_json::to_string_pretty(&report)?);
                return Ok(());
            }
            let report = compare_specs(&specs, duration, sources, 16_000)?;
            match format {
                Format::Text => print!("{}", report.to_text()),
                Format::Json => println!("{}", report.to_json()),
            }
        }
        Command::Eval {
            refs,
            est,
            mode,
            n_fft,
            hop,
            format,
        } => {
            let manifest = FixtureManifest::load(&refs).with_context(|| format!("reading {}", refs.display()))?;
            let references = manifest.build()?;
            let estimates = collect_estimates(&est)?;
            if estimates.len() != references.len() {
                bail!(Error::InvalidInput(format!(
                    "{} references but {} estimates in {}",
                    references.len(),
                    estimates.len(),
                    est.display()
                )));
            }
            if estimates.iter().any(|e| e.len() != references.len_samples()) {
                bail!(Error::InvalidInput("estimate lengths differ from references".into()));
            }
            let report = evaluate(&references, &estimates, mode, &StftConfig::new(n_fft, hop))?;
            match format {
                Format::Text => {
                    let perm: Vec<String> = report.permutation.iter().map(|p| p.to_string()).collect();
                    println!("mode={:?} permutation={}", report.mode, perm.join(","));
                    print!("{}", report.to_lines());
                }
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
        Command::Fixtures { manifest, output } => {
            let m = FixtureManifest::load(&manifest).with_context(|| format!("reading {}", manifest.display()))?;
            let set = m.build()?;
            std::fs::create_dir_all(&output)?;
            for i in 0..set.len() {
                set.source(i).write_wav(output.join(format!("src{i}.wav")))?;
            }
            set.mixture_or_sum()?.write_wav(output.join("mix.wav"))?;
            write_json(&output.join("manifest.json"), &m)?;
            println!("wrote {} source(s) and mix.wav to {}", set.len(), output.display());
        }
    }
    Ok(())
}

/// Process exit status for a failed command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::CorruptStream(_) => 3,
                Error::InvalidInput(_)
                | Error::InvalidArgument(_)
                | Error::Config(_)
                | Error::InvalidReference(_)
                | Error::WeightFormat(_)
                | Error::Wav(_)
                | Error::Json(_)
                | Error::Io(_) => 2,
                Error::ContractViolation(_) | Error::NonFinite { .. } | Error::Spec(_) => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() || cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
    }
    1
}
