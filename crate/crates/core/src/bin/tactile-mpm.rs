use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tactile_mpm::bridge::server::{Endpoint, Server};
use tactile_mpm::dataset;
use tactile_mpm::render;
use tactile_mpm::{Result, SceneConfig};

#[derive(Parser)]
#[command(version, about = "MPM tactile sensor simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Full-size sensor scene.
    Default,
    /// 64³ grid, ~2·10⁴ elastomer particles.
    Desk,
    /// Smoke-test scene.
    Tiny,
}

#[derive(Args)]
struct SceneArgs {
    /// TOML scene file; overrides --preset.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    /// Output directory.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(short, long)]
    workers: Option<usize>,
    #[arg(long)]
    deterministic: Option<bool>,
    /// Subsampling seed for every indenter.
    #[arg(long)]
    seed: Option<u64>,
}

impl SceneArgs {
    /// The scene and the directory its relative paths resolve against.
    fn load(&self) -> Result<(SceneConfig, PathBuf)> {
        let (mut cfg, base) = match &self.config {
            Some(p) => (
                SceneConfig::load(p)?,
                p.parent().map(Path::to_path_buf).unwrap_or_default(),
            ),
            None => (
                match self.preset {
                    Preset::Default => SceneConfig::default(),
                    Preset::Desk => SceneConfig::desk(),
                    Preset::Tiny => SceneConfig::tiny(),
                },
                PathBuf::from("."),
            ),
        };
        if let Some(o) = &self.output {
            cfg.output_dir = o.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(d) = self.deterministic {
            cfg.deterministic = d;
        }
        if let Some(s) = self.seed {
            for i in &mut cfg.indenters {
                i.seed = s;
            }
        }
        cfg.validate()?;
        Ok((cfg, base))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Press every indenter at every position and depth.
    Dataset {
        #[command(flatten)]
        scene: SceneArgs,
        /// Restrict to these indenters.
        #[arg(long, value_delimiter = ',')]
        objects: Vec<String>,
    },
    /// Image metrics between two datasets with matching manifests.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Per-pair CSV; defaults to `<b>/compare.csv`.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Serve the coupling protocol.
    Serve {
        #[command(flatten)]
        scene: SceneArgs,
        /// Listen on host:port instead of stdio.
        #[arg(long)]
        tcp: Option<String>,
    },
    /// Shade a stored depth map into a tactile image.
    Render {
        depth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Indenter whose alignment is used when the map needs cropping.
        #[arg(long)]
        object: Option<String>,
        #[command(flatten)]
        scene: SceneArgs,
    },
    /// Print a scene config as TOML.
    PrintDefaults {
        #[arg(long, value_enum, default_value = "default")]
        preset: Preset,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Dataset { scene, objects } => {
            let (mut cfg, base) = scene.load()?;
            if !objects.is_empty() {
                for o in &objects {
                    if !cfg.indenters.iter().any(|i| &i.name == o) {
                        return Err(tactile_mpm::Error::Config(format!("unknown object {o:?}")));
                    }
                }
                cfg.indenters.retain(|i| objects.contains(&i.name));
            }
            let summary = dataset::run_press_dataset(&cfg, &base)?;
            println!(
                "{} rows in {} ({} positions simulated, {} already done)",
                summary.rows.len(),
                summary.dir.join(dataset::MANIFEST).display(),
                summary.simulated,
                summary.skipped
            );
        }
        Command::Compare { a, b, csv } => {
            let cmp = dataset::compare_datasets(&a, &b)?;
            let out = csv.unwrap_or_else(|| b.join("compare.csv"));
            dataset::write_comparison(&out, &cmp)?;
            println!("{} pairs: {}", cmp.pairs.len(), cmp.aggregate);
        }
        Command::Serve { scene, tcp } => {
            let (cfg, base) = scene.load()?;
            let endpoint = tcp.map_or(Endpoint::Stdio, Endpoint::Tcp);
            Server::new(cfg, base).run(&endpoint)?;
        }
        Command::Render {
            depth,
            out,
            object,
            scene,
        } => {
            let (cfg, _) = scene.load()?;
            let map = render::read_depth_map(&depth)?;
            let map = if (map.width, map.height) == (render::IMAGE_WIDTH, render::IMAGE_HEIGHT) {
                map
            } else {
                let align = object.map(|o| cfg.alignment_for(&o)).unwrap_or_default();
                render::crop_align(&map, &align)?
            };
            let bg = dataset::load_background(&cfg)?;
            render::phong_render(&map, &cfg.render.lights, &cfg.render.params, bg.as_ref())?.save_png(&out)?;
        }
        Command::PrintDefaults { preset } => {
            let cfg = match preset {
                Preset::Default => SceneConfig::default(),
                Preset::Desk => SceneConfig::desk(),
                Preset::Tiny => SceneConfig::tiny(),
            };
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code().clamp(1, 255) as u8)
        }
    }
}
