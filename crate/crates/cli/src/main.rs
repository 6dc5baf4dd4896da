//! `sftc`: encode, decode and evaluate scalable face-image streams.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sftc::container::{
    decode_base_only, decode_coarse, decode_full, encode, extract_base, read_stream, EncodeConfig,
    Enhancement,
};
use sftc::eval::{rate_accuracy, sweep, SweepConfig, SweepItem};
use sftc::metrics::{bits_per_pixel, distortion, embedding_distance, write_metrics_csv, MetricsRow, Mode};
use sftc::{Error, ExternalCodec, FeatureVector, Image, ReconModel};

mod exit {
    pub const FAILURE: u8 = 1;
    // 2 is clap's usage error
    pub const IO: u8 = 3;
    pub const FORMAT: u8 = 4;
    pub const MODE_UNAVAILABLE: u8 = 5;
    pub const EXTERNAL: u8 = 6;
    pub const INVALID_INPUT: u8 = 7;
}

#[derive(Parser)]
#[command(
    name = "sftc",
    version,
    about = "Scalable face-image codec: feature base layer plus residual enhancement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EnhCodec {
    /// Base layer only
    None,
    /// Built-in 8×8 DCT residual coder
    Internal,
    /// Shell command given by --external-cmd
    External,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DecodeMode {
    Base,
    Coarse,
    Full,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    input: PathBuf,
    /// Precomputed feature (FVEC file)
    #[arg(long, conflicts_with = "extractor", required_unless_present = "extractor")]
    feature: Option<PathBuf>,
    /// Feature extractor command template with {IN} (image) and {OUT} (FVEC)
    #[arg(long)]
    extractor: Option<String>,
    #[arg(long, default_value_t = 8)]
    bits: u8,
    /// Residual quantizer step for the internal coder
    #[arg(long, default_value_t = 0.02)]
    quality: f32,
    /// Reconstruction model (NNWF); required unless --enh-codec none
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = EnhCodec::Internal)]
    enh_codec: EnhCodec,
    /// Residual encoder template with {IN} (PGM/PPM texture) and {OUT} (payload)
    #[arg(long)]
    external_cmd: Option<String>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Encode an image and its face feature into a .sftc stream
    Encode(EncodeArgs),
    /// Decode a stream: base writes an FVEC feature, coarse/full write an image
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = DecodeMode::Full)]
        mode: DecodeMode,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Residual decoder template with {IN} (payload) and {OUT} (image)
        #[arg(long)]
        external_cmd: Option<String>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Strip the enhancement layer, leaving a valid base-only stream
    ExtractBase {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Distortion and rate of one decoded image, or verification accuracy over a pairs list
    Metrics {
        #[arg(long, required_unless_present = "pairs", requires_all = ["decoded", "stream"])]
        reference: Option<PathBuf>,
        #[arg(long)]
        decoded: Option<PathBuf>,
        /// Stream the decoded image came from (rate and base-layer feature)
        #[arg(long)]
        stream: Option<PathBuf>,
        /// Original feature, for the embed_l2 column
        #[arg(long)]
        feature: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<DecodeMode>,
        #[arg(long)]
        id: Option<String>,
        /// CSV `path_a,path_b,same` of FVEC or .sftc files (relative to the list)
        #[arg(long, conflicts_with_all = ["reference", "decoded", "stream"])]
        pairs: Option<PathBuf>,
        /// Quantize pair features to this many bits first
        #[arg(long, requires = "pairs")]
        bits: Option<u8>,
    },
    /// Rate sweep over quantizer bits × residual quality steps, as CSV
    Sweep {
        /// Image files or directories; each image needs a sibling .fvec file
        #[arg(long, required = true, num_args = 1..)]
        images: Vec<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "8")]
        bits: Vec<u8>,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.02")]
        quality: Vec<f32>,
        /// Defaults to standard output
        #[arg(long)]
        out_csv: Option<PathBuf>,
    },
}

fn read_file(path: &Path) -> anyhow::Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_model(path: &Path) -> anyhow::Result<ReconModel> {
    let bytes = read_file(path)?;
    sftc::recon::load_model(&bytes).with_context(|| format!("loading model {}", path.display()))
}

fn require_model(path: Option<&PathBuf>, why: &str) -> anyhow::Result<ReconModel> {
    match path {
        Some(p) => load_model(p),
        None => Err(Error::InvalidInput(format!("--model is required {why}")).into()),
    }
}

fn load_image(path: &Path) -> anyhow::Result<Image> {
    if !path.exists() {
        return Err(io::Error::new(io::ErrorKind::NotFound, format!("{} not found", path.display())).into());
    }
    Image::load(path).with_context(|| format!("loading image {}", path.display()))
}

fn load_feature(path: &Path) -> anyhow::Result<FeatureVector> {
    let bytes = read_file(path)?;
    if path.extension().is_some_and(|e| e == "sftc") {
        return decode_base_only(&bytes)
            .with_context(|| format!("decoding base layer of {}", path.display()));
    }
    FeatureVector::from_fvec_bytes(&bytes).with_context(|| format!("parsing feature {}", path.display()))
}

fn external(template: Option<&String>) -> anyhow::Result<Option<ExternalCodec>> {
    Ok(template.map(|t| ExternalCodec::new(t.as_str())).transpose()?)
}

fn extract_feature(template: &str, image: &Path) -> anyhow::Result<FeatureVector> {
    let hook = ExternalCodec::new(template)?;
    let dir = tempfile::tempdir()?;
    let out = dir.path().join("feature.fvec");
    hook.run(image, &out).context("running the feature extractor")?;
    load_feature(&out)
}

fn cmd_encode(args: &EncodeArgs) -> anyhow::Result<()> {
    let EncodeArgs { input, feature, extractor, bits, quality, model, enh_codec, external_cmd, output } =
        args;
    let (bits, quality, enh_codec) = (*bits, *quality, *enh_codec);
    let image = load_image(input)?;
    let feature = match (feature, extractor) {
        (Some(f), _) => load_feature(f)?,
        (None, Some(cmd)) => extract_feature(cmd, input)?,
        (None, None) => bail!(Error::InvalidInput("give --feature or --extractor".into())),
    };
    let enhancement = match enh_codec {
        EnhCodec::None => Enhancement::None,
        EnhCodec::Internal => Enhancement::Internal { quality_step: quality },
        EnhCodec::External => match external(external_cmd.as_ref())? {
            Some(codec) => Enhancement::External(codec),
            None => bail!(Error::InvalidInput("--enh-codec external needs --external-cmd".into())),
        },
    };
    let model = match enh_codec {
        EnhCodec::None => model.as_deref().map(load_model).transpose()?,
        _ => Some(require_model(model.as_ref(), "for an enhancement layer")?),
    };
    let stream = encode(&image, &feature, model.as_ref(), &EncodeConfig { bits, enhancement })?;
    let bytes = sftc::write_stream(&stream)?;
    write_file(output, &bytes)?;
    eprintln!(
        "{}: {} bytes ({:.4} bpp)",
        output.display(),
        bytes.len(),
        bits_per_pixel(bytes.len(), image.width(), image.height())?
    );
    Ok(())
}

fn save_image(image: &Image, path: &Path) -> anyhow::Result<()> {
    if path.extension().is_none() {
        image.save_with_format(path, sftc::image::ImageFormat::Png)?;
    } else {
        image.save(path).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_decode(
    input: &Path,
    mode: DecodeMode,
    model: Option<&PathBuf>,
    external_cmd: Option<&String>,
    output: &Path,
) -> anyhow::Result<()> {
    let bytes = read_file(input)?;
    match mode {
        DecodeMode::Base => {
            let feature = decode_base_only(&bytes)?;
            write_file(output, &feature.to_fvec_bytes())?;
        }
        DecodeMode::Coarse => {
            let model = require_model(model, "for coarse decoding")?;
            save_image(&decode_coarse(&bytes, &model)?, output)?;
        }
        DecodeMode::Full => {
            // report a missing layer before asking for a model
            if read_stream(&bytes)?.enhancement.is_none() {
                bail!(Error::ModeUnavailable("stream has no enhancement layer".into()));
            }
            let model = require_model(model, "for full decoding")?;
            let codec = external(external_cmd)?;
            save_image(&decode_full(&bytes, &model, codec.as_ref())?, output)?;
        }
    }
    Ok(())
}

fn cmd_extract_base(input: &Path, output: &Path) -> anyhow::Result<()> {
    let base = extract_base(&read_file(input)?)?;
    write_file(output, &base)
}

fn cmd_metrics_image(
    reference: &Path,
    decoded: &Path,
    stream: &Path,
    feature: Option<&PathBuf>,
    mode: Option<DecodeMode>,
    id: Option<&String>,
) -> anyhow::Result<()> {
    let (a, b) = (load_image(reference)?, load_image(decoded)?);
    let bytes = read_file(stream)?;
    let parsed = read_stream(&bytes)?;
    let mode = match mode {
        Some(DecodeMode::Base) => {
            bail!(Error::InvalidInput("base mode carries no image; use --pairs".into()))
        }
        Some(DecodeMode::Coarse) => Mode::Coarse,
        Some(DecodeMode::Full) => Mode::Full,
        None if parsed.enhancement.is_some() => Mode::Full,
        None => Mode::Coarse,
    };
    let d = distortion(&a, &b)?;
    let embed_l2 = match feature {
        Some(f) => Some(embedding_distance(&load_feature(f)?, &parsed.feature()?)?),
        None => None,
    };
    let row = MetricsRow {
        image_id: id.cloned().unwrap_or_else(|| stem(reference)),
        mode,
        total_bits: 8 * bytes.len() as u64,
        bpp: bits_per_pixel(bytes.len(), a.width(), a.height())?,
        psnr_db: Some(d.psnr_db),
        mse: Some(d.mse),
        mae: Some(d.mae),
        embed_l2,
    };
    write_metrics_csv(&[row], io::stdout().lock())?;
    Ok(())
}

fn cmd_metrics_pairs(pairs: &Path, bits: Option<u8>) -> anyhow::Result<()> {
    let file = fs::File::open(pairs).with_context(|| format!("reading {}", pairs.display()))?;
    let entries = sftc::metrics::read_pairs(file)?;
    let root = pairs.parent().unwrap_or(Path::new("."));
    let loaded = entries
        .iter()
        .map(|e| Ok((load_feature(&root.join(&e.path_a))?, load_feature(&root.join(&e.path_b))?, e.same)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let (threshold, accuracy) = rate_accuracy(&loaded, bits)?;
    let mut out = io::stdout().lock();
    writeln!(out, "pairs,bits,threshold,accuracy")?;
    let bits = bits.map_or_else(|| "none".to_string(), |b| b.to_string());
    writeln!(out, "{},{bits},{threshold},{accuracy}", loaded.len())?;
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "bmp" | "ppm" | "pgm" | "pnm"))
}

fn collect_images(inputs: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut images = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)
                .with_context(|| format!("listing {}", input.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<io::Result<_>>()?;
            found.retain(|p| is_image(p));
            found.sort();
            images.extend(found);
        } else {
            images.push(input.clone());
        }
    }
    if images.is_empty() {
        bail!(Error::InvalidInput("no images to sweep".into()));
    }
    Ok(images)
}

fn cmd_sweep(
    images: &[PathBuf],
    model: &Path,
    bits: Vec<u8>,
    quality: Vec<f32>,
    out_csv: Option<&PathBuf>,
) -> anyhow::Result<()> {
    let model = load_model(model)?;
    let items = collect_images(images)?
        .into_iter()
        .map(|path| {
            Ok(SweepItem {
                id: stem(&path),
                image: load_image(&path)?,
                feature: load_feature(&path.with_extension("fvec"))?,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let rows = sweep(&items, &model, &SweepConfig { bits, quality_steps: quality })?;
    match out_csv {
        Some(path) => {
            let file = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
            write_metrics_csv(&rows, io::BufWriter::new(file))?;
        }
        None => write_metrics_csv(&rows, io::stdout().lock())?,
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Encode(args) => cmd_encode(&args),
        Command::Decode { input, mode, model, external_cmd, output } => {
            cmd_decode(&input, mode, model.as_ref(), external_cmd.as_ref(), &output)
        }
        Command::ExtractBase { input, output } => cmd_extract_base(&input, &output),
        Command::Metrics { reference, decoded, stream, feature, mode, id, pairs, bits } => match pairs {
            Some(p) => cmd_metrics_pairs(&p, bits),
            None => {
                let (Some(r), Some(d), Some(s)) = (reference, decoded, stream) else {
                    return Err(anyhow!(Error::InvalidInput(
                        "give --reference, --decoded and --stream, or --pairs".into()
                    )));
                };
                cmd_metrics_image(&r, &d, &s, feature.as_ref(), mode, id.as_ref())
            }
        },
        Command::Sweep { images, model, bits, quality, out_csv } => {
            cmd_sweep(&images, &model, bits, quality, out_csv.as_ref())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io(_) => exit::IO,
                Error::ModeUnavailable(_) => exit::MODE_UNAVAILABLE,
                Error::ExternalCodec { .. } => exit::EXTERNAL,
                Error::InvalidInput(_) | Error::DegenerateProtocol(_) => exit::INVALID_INPUT,
                Error::Image(e) if std::error::Error::source(e).is_some_and(|s| s.is::<io::Error>()) => {
                    exit::IO
                }
                _ => exit::FORMAT,
            };
        }
        if cause.downcast_ref::<io::Error>().is_some() {
            return exit::IO;
        }
    }
    exit::FAILURE
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if let Some(Error::ExternalCodec { diagnostics, .. }) = err.chain().find_map(|c| c.downcast_ref())
            {
                if !diagnostics.is_empty() {
                    eprintln!("{diagnostics}");
                }
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
