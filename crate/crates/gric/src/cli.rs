//! Command-line front end.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use gric_core::codec::{architecture, mse, psnr, Codec, EntropyMode, ModelConfig, ModelDims, ModelWeights, WeightInit};
use gric_core::Tensor;

use crate::error::{GricError, Result};
use crate::image_io::{read_image, write_image, RgbImage};
use crate::{container, report, selfcheck, weights_file};

/// Header of the `compress` CSV line.
pub const COMPRESS_COLUMNS: &str = "input,mode,width,height,hyper_bytes,latent_bytes,container_bytes,bpp,wall_ms";
/// Header of the `rd-point` CSV rows.
pub const RD_COLUMNS: &str = "input,mode,lambda,bpp,mse,psnr,loss";

#[derive(Parser, Debug)]
#[command(name = "gric", version, about = "Learned image codec with a global reference entropy model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    /// Weights file produced by `gen-weights`.
    #[arg(long)]
    pub weights: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compress PPM/PNG images into containers.
    Compress {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "full", value_parser = parse_mode)]
        mode: EntropyMode,
        /// Output file, or output directory with --batch.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Accept several inputs and process them concurrently.
        #[arg(long)]
        batch: bool,
    },
    /// Decode containers back to images.
    Decompress {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        /// Output image (.png or .ppm), or directory with --batch.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Original image; prints the PSNR of the reconstruction.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        batch: bool,
    },
    /// Print the header of a container or weights file.
    Inspect { input: PathBuf },
    /// Per-position rate maps and match table for one image.
    RateReport {
        input: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "full", value_parser = parse_mode)]
        mode: EntropyMode,
        /// Output directory.
        #[arg(long, default_value = "rate_report")]
        out: PathBuf,
    },
    /// Rate, distortion and loss for one image.
    RdPoint {
        input: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value = "full", value_parser = parse_mode)]
        mode: EntropyMode,
        /// CSV file to append to; the header is written when it is empty.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the embedded invariant suite.
    Selfcheck {
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Write a seeded random weights file.
    GenWeights {
        #[arg(long, default_value_t = 384)]
        latent_channels: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scale transform weights by fan-in with this gain instead of the
        /// fixed +-0.05 range.
        #[arg(long)]
        init_gain: Option<f32>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_mode(s: &str) -> std::result::Result<EntropyMode, String> {
    s.parse().map_err(|e: gric_core::Error| e.to_string())
}

/// Concurrency cap: `GRIC_THREADS` if set to a positive integer, else the
/// available parallelism.
pub fn thread_limit() -> usize {
    std::env::var("GRIC_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Applies `f` to every item on up to `threads` workers, keeping input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                *slots[i].lock().unwrap() = Some(f(item));
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap().unwrap()).collect()
}

pub fn load_codec(path: &Path) -> Result<Codec> {
    let w = weights_file::load(path)?;
    Codec::new(&w).map_err(|e| GricError::Weights(e.to_string()))
}

fn output_paths(inputs: &[PathBuf], out: Option<&Path>, batch: bool, ext: &str) -> Result<Vec<PathBuf>> {
    if !batch && inputs.len() != 1 {
        return Err(GricError::Input("several inputs need --batch".into()));
    }
    let derive = |p: &PathBuf, dir: Option<&Path>| {
        let named = p.with_extension(ext);
        match dir {
            Some(d) => d.join(named.file_name().unwrap_or_default()),
            None => named,
        }
    };
    if batch {
        if let Some(dir) = out {
            std::fs::create_dir_all(dir).map_err(|e| GricError::io(format!("creating {}", dir.display()), e))?;
        }
        Ok(inputs.iter().map(|p| derive(p, out)).collect())
    } else {
        Ok(vec![out.map_or_else(|| derive(&inputs[0], None), Path::to_path_buf)])
    }
}

/// Compresses one file and returns its CSV line.
pub fn compress_file(codec: &Codec, input: &Path, mode: EntropyMode, out: &Path) -> Result<String> {
    let start = Instant::now();
    let img = read_image(input)?;
    let enc = codec.encode(&img.to_tensor(), mode)?;
    let bs = &enc.bitstream;
    let bytes = container::to_bytes(bs);
    std::fs::write(out, &bytes).map_err(|e| GricError::io(format!("writing {}", out.display()), e))?;
    let bpp = bs.payload_bits() as f64 / (img.width * img.height) as f64;
    Ok(format!(
        "{},{},{},{},{},{},{},{:.6},{}",
        input.display(),
        mode,
        img.width,
        img.height,
        bs.hyper.len(),
        bs.latent.len(),
        bytes.len(),
        bpp,
        start.elapsed().as_millis()
    ))
}

/// Decodes one container to an image file.
pub fn decompress_file(codec: &Codec, input: &Path, out: &Path) -> Result<RgbImage> {
    let bytes = std::fs::read(input).map_err(|e| GricError::io(format!("reading {}", input.display()), e))?;
    let bs = container::from_bytes(&bytes)?;
    let dec = codec.decode(&bs)?;
    let img = RgbImage::from_tensor(&dec.image)?;
    write_image(out, &img)?;
    Ok(img)
}

/// PSNR between two 8-bit images; `inf` when identical.
pub fn format_psnr(a: &RgbImage, b: &RgbImage) -> Result<String> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(GricError::Input("reference has different dimensions".into()));
    }
    let d = mse(&a.to_tensor(), &b.to_tensor())? * 255.0 * 255.0;
    let p = psnr(d);
    Ok(if p.is_infinite() { "inf".into() } else { format!("{p:.4}") })
}

fn first_error(results: Vec<Result<String>>) -> Result<()> {
    let mut failure = None;
    for r in results {
        match r {
            Ok(line) => println!("{line}"),
            Err(e) => {
                eprintln!("error: {e}");
                failure.get_or_insert(e);
            }
        }
    }
    failure.map_or(Ok(()), Err)
}

fn inspect(path: &Path) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| GricError::io(format!("reading {}", path.display()), e))?;
    if bytes.starts_with(weights_file::MAGIC) {
        let w = weights_file::from_bytes(&bytes)?;
        let d = &w.config.dims;
        println!("kind=weights");
        println!("latent_channels={}", d.latent_channels);
        println!("main_channels={}", d.main_channels);
        println!("hyper_channels={}", d.hyper_channels);
        println!("hyper_output_channels={}", d.hyper_output_channels());
        println!("patch_size={}", d.patch_size);
        println!("leaky_slope={}", w.config.leaky_slope);
        println!("latent_support={}", w.config.latent_support);
        println!("hyper_support={}", w.config.hyper_support);
        println!("parameters={}", w.parameter_count());
        println!("hash={}", weights_file::hex(&w.hash));
        for layer in architecture(d) {
            println!("layer {} {}", layer.name, layer.describe());
        }
    } else {
        let bs = container::from_bytes(&bytes)?;
        let (lh, lw) = bs.latent_dims();
        println!("kind=container");
        println!("mode={}", bs.mode);
        println!("width={}", bs.width);
        println!("height={}", bs.height);
        println!("padded_width={}", bs.padded_width);
        println!("padded_height={}", bs.padded_height);
        println!("latent_grid={lh}x{lw}");
        println!("weights_hash={}", weights_file::hex(&bs.weights_hash));
        println!("hyper_bytes={}", bs.hyper.len());
        println!("latent_bytes={}", bs.latent.len());
        println!("container_bytes={}", bytes.len());
    }
    Ok(())
}

fn rd_point(codec: &Codec, input: &Path, lambda: f64, mode: EntropyMode, out: Option<&Path>) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(GricError::Input("lambda must be a non-negative number".into()));
    }
    let img: Tensor = read_image(input)?.to_tensor();
    let rd = codec.rd_loss(&img, lambda, mode)?;
    let psnr = if rd.psnr.is_infinite() { "inf".into() } else { format!("{:.6}", rd.psnr) };
    let row = format!(
        "{},{},{},{:.6},{:.9},{},{:.6}",
        input.display(),
        mode,
        lambda,
        rd.bpp,
        rd.mse,
        psnr,
        rd.loss
    );
    if let Some(path) = out {
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| GricError::io(format!("opening {}", path.display()), e))?;
        let empty = f.metadata().map(|m| m.len() == 0).unwrap_or(true);
        let text = if empty { format!("{RD_COLUMNS}\n{row}\n") } else { format!("{row}\n") };
        f.write_all(text.as_bytes())
            .map_err(|e| GricError::io(format!("writing {}", path.display()), e))?;
    }
    println!("{row}");
    Ok(())
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Compress {
            inputs,
            model,
            mode,
            out,
            batch,
        } => {
            let outs = output_paths(&inputs, out.as_deref(), batch, "gric")?;
            let codec = load_codec(&model.weights)?;
            let jobs: Vec<(PathBuf, PathBuf)> = inputs.into_iter().zip(outs).collect();
            let lines = parallel_map(&jobs, thread_limit(), |(i, o)| compress_file(&codec, i, mode, o));
            first_error(lines)?;
        }
        Command::Decompress {
            inputs,
            model,
            out,
            reference,
            batch,
        } => {
            if batch && reference.is_some() {
                return Err(GricError::Input("--reference applies to a single input".into()));
            }
            let outs = output_paths(&inputs, out.as_deref(), batch, "ppm")?;
            let codec = load_codec(&model.weights)?;
            let jobs: Vec<(PathBuf, PathBuf)> = inputs.into_iter().zip(outs).collect();
            let results = parallel_map(&jobs, thread_limit(), |(i, o)| {
                let img = decompress_file(&codec, i, o)?;
                match &reference {
                    Some(r) => Ok(format!("{},psnr,{}", o.display(), format_psnr(&read_image(r)?, &img)?)),
                    None => Ok(format!("{}", o.display())),
                }
            });
            first_error(results)?;
        }
        Command::Inspect { input } => inspect(&input)?,
        Command::RateReport {
            input,
            model,
            mode,
            out,
        } => {
            let codec = load_codec(&model.weights)?;
            let est = codec.estimate_rate(&read_image(&input)?.to_tensor(), mode)?;
            report::write_rate_report(&est, &out)?;
            println!("latent_bits,hyper_bits,total_bits,bpp,latent_height,latent_width");
            println!(
                "{:.6},{:.6},{:.6},{:.6},{},{}",
                est.latent_bits, est.hyper_bits, est.total_bits, est.bpp, est.latent_height, est.latent_width
            );
        }
        Command::RdPoint {
            input,
            model,
            lambda,
            mode,
            out,
        } => {
            let codec = load_codec(&model.weights)?;
            rd_point(&codec, &input, lambda, mode, out.as_deref())?;
        }
        Command::Selfcheck { weights } => {
            let w: ModelWeights = match weights {
                Some(p) => {
                    let w = weights_file::load(&p)?;
                    Codec::new(&w).map_err(|e| GricError::Weights(e.to_string()))?;
                    w
                }
                None => selfcheck::default_weights(),
            };
            let results = selfcheck::run(&w);
            print!("{}", selfcheck::table(&results));
            return Ok(if results.iter().all(|r| r.passed) { 0 } else { 1 });
        }
        Command::GenWeights {
            latent_channels,
            seed,
            init_gain,
            out,
        } => {
            let dims = if latent_channels == ModelDims::default().latent_channels {
                ModelDims::default()
            } else {
                ModelDims::with_latent_channels(latent_channels)
            };
            let config = ModelConfig::new(dims);
            config.validate().map_err(|e| GricError::Input(e.to_string()))?;
            let init = init_gain.map_or(WeightInit::default(), WeightInit::FanIn);
            let w = ModelWeights::generate(config, seed, init);
            let hash = weights_file::save(&w, &out)?;
            println!("{},{}", out.display(), weights_file::hex(&hash));
        }
    }
    Ok(0)
}
