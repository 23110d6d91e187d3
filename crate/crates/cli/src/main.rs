//! `wskit` command-line front end. Every subcommand prints one JSON report.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use wskit::acceptance::run_all;
use wskit::canonize::canon;
use wskit::equiv::{
    counterexample_scaling, functionally_equal, functionally_equal_exact, g_equivalent,
    nft_separation_demo, scaling_witness, wl_witness,
};
use wskit::graph::{build_graph, wl_refine, Variant};
use wskit::regions::{region_bound, regions_1d};
use wskit::simulate::{random_ng_params, verify_simulation};
use wskit::{act, is_general_position, random_weights, realize, Architecture, Error, GroupElement, WeightDist, WeightElement};

#[derive(Parser)]
#[command(name = "wskit", version, about = "Checks on MLP weight spaces and their permutation symmetries")]
struct Cli {
    /// Indented JSON instead of a single line.
    #[arg(long, global = true)]
    pretty: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluates the network at one input.
    Forward {
        weights: PathBuf,
        /// Comma-separated input vector.
        #[arg(long, allow_hyphen_values = true)]
        x: String,
    },
    /// Applies a hidden-neuron permutation.
    Act {
        weights: PathBuf,
        /// `layer:image;...`, e.g. "1:1,0;2:2,0,1". Layers are 1-based hidden
        /// layers; `image[i]` is where neuron i moves. Unlisted layers are fixed.
        #[arg(long)]
        perm: String,
    },
    /// Canonical representative and the permutation reaching it.
    Canonize { weights: PathBuf },
    /// Checks that hidden biases are pairwise distinct within each layer.
    GpCheck {
        weights: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        tol: f64,
    },
    /// Builds the neural graph of a weight file.
    Graph {
        weights: PathBuf,
        #[arg(long, value_enum)]
        variant: GraphVariant,
        /// Also run 1-WL colour refinement.
        #[arg(long)]
        wl: bool,
    },
    /// Reproduces one of the built-in witness pairs.
    Counterexample {
        #[arg(value_enum)]
        which: Witness,
        /// Scale factor for `scaling`.
        #[arg(long, default_value_t = 2.0)]
        lambda: f64,
    },
    /// Compares two weight files under permutation and functional equivalence.
    EquivTest {
        a: PathBuf,
        b: PathBuf,
        /// Exact piecewise-affine comparison (1-D input ReLU nets only).
        #[arg(long)]
        exact_1d: bool,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 4096)]
        samples: usize,
    },
    /// Compiles a random NG layer into a DWS program and compares both.
    SimulateNgDws {
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated layer widths.
        #[arg(long)]
        arch: String,
        #[arg(long, default_value_t = 1)]
        channels: usize,
        /// Hidden width of the update MLPs; 0 for affine updates.
        #[arg(long, default_value_t = 8)]
        hidden: usize,
        #[arg(long, default_value_t = 4)]
        msg_dim: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Linear regions of a 1-D input ReLU network on an interval.
    Regions {
        weights: PathBuf,
        /// `a,b`
        #[arg(long, allow_hyphen_values = true)]
        interval: String,
    },
    /// Runs every acceptance check.
    Suite {
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphVariant {
    Gmn,
    Ng,
}

#[derive(Clone, Copy, ValueEnum)]
enum Witness {
    Scaling,
    Wl,
    Nft,
}

/// Failures that end a run before a report exists.
enum Failure {
    Usage(String),
    Input(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Run = Result<(Value, bool), Failure>;

struct Inputs {
    hasher: Sha256,
}

impl Inputs {
    fn new() -> Self {
        Self { hasher: Sha256::new() }
    }

    fn arg(&mut self, s: &str) {
        self.hasher.update((s.len() as u64).to_le_bytes());
        self.hasher.update(s.as_bytes());
    }

    fn weights(&mut self, path: &Path) -> Result<WeightElement, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        self.arg(&text);
        wskit::io::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
    }

    fn digest(self) -> String {
        hex::encode(self.hasher.finalize())
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, Failure> {
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| Failure::Usage(format!("bad {what}: {s:?}"))))
        .collect()
}

fn parse_perm(spec: &str, arch: &Architecture) -> Result<GroupElement, Failure> {
    let mut perms: Vec<Vec<usize>> = arch.hidden_dims().iter().map(|&d| (0..d).collect()).collect();
    for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (layer, image) = part
            .split_once(':')
            .ok_or_else(|| Failure::Usage(format!("bad permutation part {part:?}")))?;
        let layer: usize = layer
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("bad layer in {part:?}")))?;
        if layer == 0 || layer > perms.len() {
            return Err(Failure::Usage(format!("layer {layer} is not a hidden layer")));
        }
        perms[layer - 1] = parse_list(image, "permutation")?;
    }
    GroupElement::new(arch, perms).map_err(|e| Failure::Usage(e.to_string()))
}

fn default_seed() -> u64 {
    std::env::var("WSKIT_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(0)
}

fn run(cmd: &Command, inputs: &mut Inputs) -> Run {
    match cmd {
        Command::Forward { weights, x } => {
            inputs.arg(x);
            let v = inputs.weights(weights)?;
            let x: Vec<f64> = parse_list(x, "input vector")?;
            let y = realize(&v, &x).map_err(|e| Failure::Usage(e.to_string()))?;
            Ok((json!({ "x": x, "output": y }), true))
        }
        Command::Act { weights, perm } => {
            inputs.arg(perm);
            let v = inputs.weights(weights)?;
            let g = parse_perm(perm, v.arch())?;
            let gv = act(&g, &v)?;
            Ok((json!({ "perm": g.perms(), "weights": wskit::io::to_json(&gv) }), true))
        }
        Command::Canonize { weights } => {
            let v = inputs.weights(weights)?;
            match canon(&v) {
                Ok(c) => Ok((
                    json!({
                        "representative": wskit::io::to_json(&c.representative),
                        "g_v": c.g_v.perms(),
                    }),
                    true,
                )),
                Err(e @ (Error::TiedBiases { .. } | Error::UnsupportedChannels(_))) => {
                    Ok((json!({ "error": e.to_string() }), false))
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::GpCheck { weights, tol } => {
            inputs.arg(&tol.to_string());
            let v = inputs.weights(weights)?;
            let gp = is_general_position(&v, *tol)?;
            Ok((json!({ "general_position": gp, "tol": tol }), gp))
        }
        Command::Graph { weights, variant, wl } => {
            let variant = match variant {
                GraphVariant::Gmn => Variant::Gmn,
                GraphVariant::Ng => Variant::Ng,
            };
            inputs.arg(&format!("{variant:?} {wl}"));
            let v = inputs.weights(weights)?;
            let g = build_graph(&v, variant);
            let mut out = json!({
                "nodes": g.num_nodes(),
                "edges": g.num_edges(),
                "node_dim": g.node_dim,
                "edge_dim": g.edge_dim,
                "symmetric": g.is_symmetric(),
                "graph": g.to_json(),
            });
            if *wl {
                out["wl"] = serde_json::to_value(wl_refine(&g, g.num_nodes() + 1)).expect("serializable");
            }
            Ok((out, g.is_symmetric()))
        }
        Command::Counterexample { which, lambda } => match which {
            Witness::Scaling => {
                inputs.arg(&lambda.to_string());
                counterexample_scaling(*lambda).map_err(|e| Failure::Usage(e.to_string()))?;
                let r = scaling_witness(*lambda)?;
                let pass = r.functionally_equal == Some(true)
                    && r.g_equivalent == Some(false)
                    && r.invariant_left != r.invariant_right;
                Ok((serde_json::to_value(r).expect("serializable"), pass))
            }
            Witness::Wl => {
                let r = wl_witness()?;
                let pass = (r.rank_left, r.rank_right) == (Some(3), Some(2))
                    && r.wl_distinguishable == Some(false)
                    && r.g_equivalent == Some(false)
                    && r.functionally_equal == Some(true);
                let mut out = serde_json::to_value(&r).expect("serializable");
                out["ranks"] = json!([r.rank_left, r.rank_right]);
                Ok((out, pass))
            }
            Witness::Nft => {
                let d = nft_separation_demo()?;
                let pass = (d.outputs.0 - 8.0 / 33.0).abs() <= 1e-12 && (d.outputs.1 - 16.0 / 33.0).abs() <= 1e-12;
                let mut out = serde_json::to_value(&d).expect("serializable");
                out["outputs"] = json!([d.outputs.0, d.outputs.1]);
                Ok((out, pass))
            }
        },
        Command::EquivTest { a, b, exact_1d, tol, samples } => {
            inputs.arg(&format!("{exact_1d} {tol} {samples}"));
            let (v, w) = (inputs.weights(a)?, inputs.weights(b)?);
            let (geq, witness) = match g_equivalent(&v, &w, *tol) {
                Ok((ok, g)) => (Some(ok), g.map(|g| g.perms().to_vec())),
                Err(Error::BudgetExceeded { .. }) => (None, None),
                Err(e) => return Err(e.into()),
            };
            let feq = if *exact_1d {
                functionally_equal_exact(&v, &w, (-10.0, 10.0), *tol)?
            } else {
                let domain = vec![(-1.0, 1.0); v.arch().input_dim()];
                functionally_equal(&v, &w, &domain, *samples, *tol)?
            };
            // Permutation equivalence must imply functional equivalence.
            let consistent = geq != Some(true) || feq;
            Ok((
                json!({
                    "g_equivalent": geq,
                    "witness": witness,
                    "functionally_equal": feq,
                    "mode": if *exact_1d { "exact_1d" } else { "sampled" },
                    "consistent": consistent,
                }),
                consistent,
            ))
        }
        Command::SimulateNgDws { seed, arch, channels, hidden, msg_dim, tol } => {
            let seed = seed.unwrap_or_else(default_seed);
            inputs.arg(&format!("{seed} {arch} {channels} {hidden} {msg_dim} {tol}"));
            let dims: Vec<usize> = parse_list(arch, "architecture")?;
            let a = Architecture::relu(&dims).map_err(|e| Failure::Usage(e.to_string()))?;
            if *channels == 0 || *msg_dim == 0 {
                return Err(Failure::Usage("channels and msg-dim must be positive".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_ng_params(&a, *channels, *hidden, *msg_dim, &mut rng)?;
            let v = random_weights(&a, *channels, seed, WeightDist::default());
            let r = verify_simulation(&p, &v, *tol)?;
            let pass = r.pass;
            Ok((serde_json::to_value(r).expect("serializable"), pass))
        }
        Command::Regions { weights, interval } => {
            inputs.arg(interval);
            let v = inputs.weights(weights)?;
            let ab: Vec<f64> = parse_list(interval, "interval")?;
            if ab.len() != 2 || !(ab[0] < ab[1]) {
                return Err(Failure::Usage(format!("interval must be a,b with a < b, got {interval:?}")));
            }
            let pl = regions_1d(&v, (ab[0], ab[1])).map_err(|e| Failure::Usage(e.to_string()))?;
            let bound = region_bound(v.arch());
            let pass = bound.saturated || pl.num_regions() as u64 <= bound.value;
            Ok((
                json!({ "num_regions": pl.num_regions(), "bound": bound, "pieces": pl.to_json() }),
                pass,
            ))
        }
        Command::Suite { seed } => {
            let seed = seed.unwrap_or_else(default_seed);
            inputs.arg(&seed.to_string());
            let outcomes = run_all(seed);
            for o in &outcomes {
                eprintln!("criterion {:>2} {}: {:.3}s", o.id, o.name, o.elapsed.as_secs_f64());
            }
            let pass = outcomes.iter().all(|o| o.pass);
            Ok((json!({ "seed": seed, "criteria": outcomes }), pass))
        }
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Forward { .. } => "forward",
        Command::Act { .. } => "act",
        Command::Canonize { .. } => "canonize",
        Command::GpCheck { .. } => "gp-check",
        Command::Graph { .. } => "graph",
        Command::Counterexample { .. } => "counterexample",
        Command::EquivTest { .. } => "equiv-test",
        Command::SimulateNgDws { .. } => "simulate-ng-dws",
        Command::Regions { .. } => "regions",
        Command::Suite { .. } => "suite",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let mut inputs = Inputs::new();
    inputs.arg(command_name(&cli.command));
    let outcome = run(&cli.command, &mut inputs);
    eprintln!("wall time: {:.3}s", start.elapsed().as_secs_f64());
    match outcome {
        Ok((results, pass)) => {
            let report = json!({
                "command": command_name(&cli.command),
                "inputs_digest": inputs.digest(),
                "results": results,
                "pass": pass,
            });
            let text = if cli.pretty {
                serde_json::to_string_pretty(&report)
            } else {
                serde_json::to_string(&report)
            }
            .expect("serializable");
            println!("{text}");
            ExitCode::from(if pass { 0 } else { 1 })
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
