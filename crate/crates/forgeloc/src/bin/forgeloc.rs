//! Command-line front end for the forgery localization pipeline.
//!
//! Exit codes: 0 on success, 2 for input errors, 3 for scorer protocol
//! errors.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use forgeloc::edge_target::{soft_edge_target, EdgeTargetConfig};
use forgeloc::eval::{fuse_max, sweep};
use forgeloc::features::dump_kernels;
use forgeloc::heatmap::sh_heatmap;
use forgeloc::io;
use forgeloc::pipeline::{run_eval, DatasetManifest, PipelineConfig};
use forgeloc::scorer::{run_loopback, LoopbackMode, ScorerSpec};
use forgeloc::tiler::{plan_tiles, plan_windows};
use forgeloc::{localize, Error, Result};

#[derive(Parser)]
#[command(name = "forgeloc", version, about = "Dual-branch image forgery localization")]
struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for randomized operators (prior augmentation).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// key=value settings file applied before command-line flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct ScorerArgs {
    /// Pixel scorer: constant:<v>, edge-energy, oracle[:<mask>], or
    /// external:<dir>:<command>.
    #[arg(long)]
    egs_scorer: Option<String>,

    /// Tile scorer: constant:<logit>, oracle[:<mask>], or
    /// external:<dir>:<command>.
    #[arg(long)]
    sh_scorer: Option<String>,

    /// Edge-prior source for external segmenters.
    #[arg(long)]
    prior: Option<String>,
}

impl ScorerArgs {
    fn apply(&self, cfg: &mut PipelineConfig) -> Result<()> {
        if let Some(s) = &self.egs_scorer {
            cfg.egs_scorer = s.parse::<ScorerSpec>()?;
        }
        if let Some(s) = &self.sh_scorer {
            cfg.sh_scorer = s.parse::<ScorerSpec>()?;
        }
        if let Some(s) = &self.prior {
            cfg.prior_scorer = s.parse::<ScorerSpec>()?;
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run both branches on one image and write all maps plus the mask.
    Localize {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        scorers: ScorerArgs,
        /// Binarization threshold.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        max_tile_side: Option<usize>,
        #[arg(long)]
        patch: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        /// Write the tile plan as `y0 x0 h w` lines.
        #[arg(long)]
        dump_plan: Option<PathBuf>,
        /// Also write raw float dumps next to the PNG maps.
        #[arg(long)]
        raw: bool,
    },

    /// Sliding-window heatmap of a tile scorer.
    Heatmap {
        #[arg(long)]
        image: PathBuf,
        /// Tile scorer spec.
        #[arg(long)]
        scorer: String,
        #[arg(long, default_value_t = 336)]
        patch: usize,
        #[arg(long, default_value_t = 112)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
        /// Write the window plan as `y x p p` lines.
        #[arg(long)]
        dump_plan: Option<PathBuf>,
    },

    /// Soft multi-scale edge target from a binary mask.
    EdgeTargets {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated disk radii.
        #[arg(long, default_value = "3,7,15")]
        radii: String,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f32,
    },

    /// Filter bank utilities.
    Features {
        /// Print every kernel's coefficients.
        #[arg(long)]
        dump_kernels: bool,
        /// Compute the residual/gradient planes and edge energy of an image.
        #[arg(long, requires = "out_dir")]
        image: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },

    /// Pointwise maximum of two probability maps.
    Fuse {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },

    /// Localize every SP manifest entry and sweep the threshold grid.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        scorers: ScorerArgs,
        #[arg(long)]
        max_tile_side: Option<usize>,
        #[arg(long)]
        patch: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
    },

    /// Threshold sweep over saved probability maps; the list file holds
    /// `<pred path> <mask path>` per line.
    Sweep {
        #[arg(long)]
        list: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },

    /// Protocol loopback endpoint used for testing external scorers.
    #[command(hide = true)]
    Loopback {
        #[arg(long, value_parser = ["pixel", "tile"], default_value = "tile")]
        mode: String,
        /// Deliberately omit one response index.
        #[arg(long)]
        drop: Option<usize>,
        dir: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Protocol(_) => 3,
                _ => 2,
            };
            std::process::exit(code);
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        if let Some(aug) = &mut cfg.egs_aug {
            aug.rng_seed = seed;
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli.command, cfg))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn dispatch(cmd: Cmd, mut cfg: PipelineConfig) -> Result<()> {
    match cmd {
        Cmd::Localize {
            image,
            out_dir,
            scorers,
            tau,
            max_tile_side,
            patch,
            stride,
            dump_plan,
            raw,
        } => {
            scorers.apply(&mut cfg)?;
            if let Some(v) = tau {
                cfg.tau = v;
            }
            if let Some(v) = max_tile_side {
                cfg.max_tile_side = v;
            }
            if let Some(v) = patch {
                cfg.patch = v;
            }
            if let Some(v) = stride {
                cfg.stride = v;
            }
            cfg.validate()?;
            let img = io::load_image(&image)?;
            if let Some(path) = dump_plan {
                let plan = plan_tiles(img.height(), img.width(), cfg.max_tile_side)?;
                fs::write(&path, plan.dump_text()).map_err(|e| Error::io(&path, e))?;
            }
            let resolved = cfg.resolve_scorers(None)?;
            let out = localize(img, &resolved, &cfg)?;
            ensure_dir(&out_dir)?;
            io::save_prob_png(&out.p_egs, &out_dir.join("p_egs.png"))?;
            io::save_prob_png(&out.p_sh, &out_dir.join("p_sh.png"))?;
            io::save_prob_png(&out.p_fuse, &out_dir.join("p_fuse.png"))?;
            io::save_mask_png(&out.mask, &out_dir.join("mask.png"))?;
            if raw {
                io::save_raw(&[out.p_egs.plane()], &out_dir.join("p_egs.edgr"))?;
                io::save_raw(&[out.p_sh.plane()], &out_dir.join("p_sh.edgr"))?;
                io::save_raw(&[out.p_fuse.plane()], &out_dir.join("p_fuse.edgr"))?;
            }
            println!("wrote maps to {}", out_dir.display());
        }

        Cmd::Heatmap {
            image,
            scorer,
            patch,
            stride,
            out,
            dump_plan,
        } => {
            let spec: ScorerSpec = scorer.parse()?;
            let img = io::load_image(&image)?;
            if let Some(path) = dump_plan {
                let plan = plan_windows(img.height(), img.width(), patch, stride)?;
                fs::write(&path, plan.dump_text()).map_err(|e| Error::io(&path, e))?;
            }
            let tile_scorer = spec.resolve_tile(None, cfg.batch_size)?;
            let map = sh_heatmap(&img, tile_scorer.as_ref(), patch, stride, cfg.heatmap_epsilon)?;
            io::save_prob_png(&map, &out)?;
            println!("wrote heatmap to {}", out.display());
        }

        Cmd::EdgeTargets {
            mask,
            out,
            radii,
            lambda,
            epsilon,
        } => {
            let radii: Vec<usize> = radii
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse()
                        .map_err(|_| Error::InvalidInput(format!("bad radius {t:?}")))
                })
                .collect::<Result<_>>()?;
            let mask = io::load_mask(&mask, io::DEFAULT_MASK_THRESHOLD)?;
            let target = soft_edge_target(
                &mask,
                &EdgeTargetConfig {
                    radii,
                    lambda,
                    epsilon,
                },
            )?;
            io::save_prob_png(&target, &out)?;
            println!("wrote edge target to {}", out.display());
        }

        Cmd::Features {
            dump_kernels: dump,
            image,
            out_dir,
        } => {
            if !dump && image.is_none() {
                return Err(Error::InvalidInput(
                    "features needs --dump-kernels and/or --image".into(),
                ));
            }
            if dump {
                print!("{}", dump_kernels(1.5));
            }
            if let Some(image) = image {
                let out_dir = out_dir.expect("clap enforces requires");
                ensure_dir(&out_dir)?;
                let img = io::load_image(&image)?;
                let luma = forgeloc::raster::to_luminance(&img);
                let residual = forgeloc::features::residual_stack(&img, &luma, 1.5)?;
                let gradient = forgeloc::features::gradient_features(&luma);
                io::save_raw(&residual.planes(), &out_dir.join("residual.edgr"))?;
                io::save_raw(&gradient.planes(), &out_dir.join("gradient.edgr"))?;
                let energy = forgeloc::features::edge_energy_score(
                    &img,
                    &forgeloc::features::EdgeEnergyConfig::default(),
                )?;
                io::save_prob_png(&energy, &out_dir.join("edge_energy.png"))?;
                println!("wrote feature planes to {}", out_dir.display());
            }
        }

        Cmd::Fuse { a, b, out } => {
            let map_a = io::load_prob_png(&a)?;
            let map_b = io::load_prob_png(&b)?;
            let fused = fuse_max(&map_a, &map_b)?;
            io::save_prob_png(&fused, &out)?;
            println!("wrote fused map to {}", out.display());
        }

        Cmd::Eval {
            manifest,
            out_dir,
            scorers,
            max_tile_side,
            patch,
            stride,
        } => {
            scorers.apply(&mut cfg)?;
            if let Some(v) = max_tile_side {
                cfg.max_tile_side = v;
            }
            if let Some(v) = patch {
                cfg.patch = v;
            }
            if let Some(v) = stride {
                cfg.stride = v;
            }
            let manifest = DatasetManifest::load(&manifest)?;
            let report = run_eval(&manifest, &cfg)?;
            ensure_dir(&out_dir)?;
            let curve_path = out_dir.join("curve.csv");
            fs::write(&curve_path, report.curve.to_csv()).map_err(|e| Error::io(&curve_path, e))?;
            let mut per_image = String::from("image,iou_at_best_tau\n");
            for row in &report.per_image {
                per_image.push_str(&format!("{},{:.6}\n", row.image.display(), row.iou));
            }
            let per_path = out_dir.join("per_image.csv");
            fs::write(&per_path, per_image).map_err(|e| Error::io(&per_path, e))?;
            println!(
                "best_tau {:.2} best_iou {:.6} over {} SP images",
                report.curve.best_tau,
                report.curve.best_iou,
                report.per_image.len()
            );
        }

        Cmd::Sweep { list, out } => {
            let text = fs::read_to_string(&list).map_err(|e| Error::io(&list, e))?;
            let base = list.parent().unwrap_or(Path::new("."));
            let mut preds = Vec::new();
            let mut gts = Vec::new();
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let mut parts = line.split_whitespace();
                let (Some(p), Some(g)) = (parts.next(), parts.next()) else {
                    return Err(Error::InvalidInput(format!(
                        "{} line {}: expected `<pred> <mask>`",
                        list.display(),
                        lineno + 1
                    )));
                };
                preds.push(io::load_prob_png(&base.join(p))?);
                gts.push(io::load_mask(&base.join(g), io::DEFAULT_MASK_THRESHOLD)?);
            }
            let curve = sweep(&preds, &gts)?;
            fs::write(&out, curve.to_csv()).map_err(|e| Error::io(&out, e))?;
            println!(
                "best_tau {:.2} best_iou {:.6} over {} samples",
                curve.best_tau,
                curve.best_iou,
                preds.len()
            );
        }

        Cmd::Loopback { mode, drop, dir } => {
            let mode = match mode.as_str() {
                "pixel" => LoopbackMode::Pixel,
                _ => LoopbackMode::Tile,
            };
            run_loopback(&dir, mode, drop)?;
        }
    }
    Ok(())
}
