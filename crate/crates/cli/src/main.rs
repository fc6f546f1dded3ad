//! `certimdp`: decide, certify, validate and explain multi-objective
//! ω-regular queries on MDPs.
//!
//! Exit codes: 0 holds or accepted, 1 fails or rejected, 2 structural error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use certimdp::automata::{check_unambiguous, Automaton, Quantifier, Query, UnambiguityFlag, UnambiguityVerdict};
use certimdp::component_certs::generate_mec_certificate;
use certimdp::ec_analysis::Limits;
use certimdp::error::{Error, Result};
use certimdp::graph::mec_decomposition;
use certimdp::hoa::parse_automaton;
use certimdp::io::{parse_labeling, parse_model, write_triples};
use certimdp::model::{Labeling, Mdp, StateSet};
use certimdp::omega::{bundle_from_json, bundle_to_json, certify_query, mec_certificate_to_json, validate_bundle, Certifies};
use certimdp::uba::{uba_objectives, uba_witness};
use certimdp::witness::{witness_exists_exact, witness_exists_quotient, witness_forall, WitnessProblem, WitnessResult};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "certimdp", version, about = "Certifying multi-objective omega-regular model checking for MDPs")]
struct Cli {
    /// Worker threads for the parallel regions; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    threads: u16,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide a query and print HOLDS or FAILS.
    Check(QueryArgs),
    /// Decide a query and write the bundle of the holding side.
    Certify {
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Check a bundle against a model and query without running any generator.
    Validate {
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Label-minimal witnessing subsystem of a holding query.
    Witness {
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long)]
        labeling: Option<PathBuf>,
        /// Exact Rabin MILP for exists-and queries instead of the quotient MILP.
        #[arg(long)]
        exact_exists_witness: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print the MEC decomposition and write its certificate.
    Mec {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Label-minimal witness of a Markov chain against unambiguous Büchi automata.
    UbaWitness {
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long)]
        labeling: Option<PathBuf>,
        /// Check unambiguity of automata that only declare it.
        #[arg(long)]
        verify_uba: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    query: PathBuf,
    /// HOA automaton; repeat for several, numbered in order from 0.
    #[arg(long = "automaton")]
    automata: Vec<PathBuf>,
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(1..))]
    k_cap: u64,
    #[arg(long, default_value_t = 1 << 20, value_parser = clap::value_parser!(u64).range(1..))]
    combination_cap: u64,
}

struct Loaded {
    m: Mdp,
    q: Query,
    autos: Vec<Automaton>,
    limits: Limits,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Model(format!("{}: {e}", path.display())))
}

fn write(dir: &Path, file: &str, text: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::Model(format!("{}: {e}", dir.display())))?;
    let path = dir.join(file);
    fs::write(&path, text).map_err(|e| Error::Model(format!("{}: {e}", path.display())))?;
    Ok(path)
}

impl QueryArgs {
    fn load(&self) -> Result<Loaded> {
        let m = parse_model(&read(&self.model)?)?;
        let q = certimdp::automata::parse_query(&m, &read(&self.query)?)?;
        let autos = self.automata.iter().map(|p| parse_automaton(&read(p)?, m.names())).collect::<Result<Vec<_>>>()?;
        let limits = Limits { k_cap: self.k_cap as usize, combination_cap: u128::from(self.combination_cap) };
        Ok(Loaded { m, q, autos, limits })
    }
}

fn labeling(m: &Mdp, path: &Option<PathBuf>) -> Result<Labeling> {
    match path {
        Some(p) => parse_labeling(m, &read(p)?),
        None => Ok(Labeling::per_state(m)),
    }
}

fn verdict_line(holds: bool) -> &'static str {
    if holds {
        "HOLDS"
    } else {
        "FAILS"
    }
}

fn exit(holds: bool) -> ExitCode {
    ExitCode::from(if holds { 0 } else { 1 })
}

/// Writes the induced subsystem and its summary.
fn emit_witness(m: &Mdp, labels: &Labeling, w: &WitnessResult, out: &Path) -> Result<()> {
    let sub = m.induced_subsystem(&w.states)?;
    let model = write(out, "witness.model", &write_triples(&sub.mdp))?;
    let names = |set: &StateSet| -> Vec<String> { set.iter().map(|&s| m.name(s).to_string()).collect() };
    let summary = serde_json::json!({
        "states": names(&w.states),
        "labels": w.labels.iter().map(|&l| labels.label_name(l)).collect::<Vec<_>>(),
        "objective": w.objective,
        "minimal_guarantee": w.minimal_guarantee,
    });
    let json = write(out, "witness.json", &serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    println!("witness: {} states, {} labels", w.states.len(), w.objective);
    println!("states: {}", names(&w.states).join(" "));
    println!("wrote {} and {}", model.display(), json.display());
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Check(a) => {
            let l = a.load()?;
            let holds = certify_query(&l.m, &l.q, &l.autos, l.limits)?.holds();
            println!("{}", verdict_line(holds));
            Ok(exit(holds))
        }
        Command::Certify { query, out } => {
            let l = query.load()?;
            let v = certify_query(&l.m, &l.q, &l.autos, l.limits)?;
            println!("{}", verdict_line(v.holds()));
            match v.bundle() {
                Some(b) => {
                    let side = match b.certifies {
                        Certifies::Query => "query",
                        Certifies::Dual => "dual",
                    };
                    let path = write(&out, "bundle.json", &bundle_to_json(&l.m, b))?;
                    println!("certifies: {side}");
                    println!("wrote {}", path.display());
                }
                None => println!("no bundle: the dual is only certified on models without sub-stochastic mass"),
            }
            Ok(exit(v.holds()))
        }
        Command::Validate { query, bundle } => {
            let l = query.load()?;
            let b = bundle_from_json(&l.m, &read(&bundle)?)?;
            match validate_bundle(&l.m, &l.q, &l.autos, &b, l.limits) {
                Ok(()) => {
                    println!("ACCEPT");
                    Ok(exit(true))
                }
                Err(reject) => {
                    println!("REJECT: {reject:?}");
                    Ok(exit(false))
                }
            }
        }
        Command::Witness { query, labeling: lab, exact_exists_witness, out } => {
            let l = query.load()?;
            let labels = labeling(&l.m, &lab)?;
            let wp = WitnessProblem { m: &l.m, q: &l.q, autos: &l.autos, labels: &labels, limits: l.limits };
            let w = match (l.q.quantifier, exact_exists_witness) {
                (Quantifier::ForallOr, _) => witness_forall(&wp),
                (Quantifier::ExistsAnd, false) => witness_exists_quotient(&wp),
                (Quantifier::ExistsAnd, true) => witness_exists_exact(&wp),
            };
            match w {
                Ok(w) => {
                    emit_witness(&l.m, &labels, &w, &out)?;
                    Ok(exit(true))
                }
                Err(Error::Infeasible(msg)) => {
                    println!("FAILS: no witness ({msg})");
                    Ok(exit(false))
                }
                Err(e) => Err(e),
            }
        }
        Command::Mec { model, out } => {
            let m = parse_model(&read(&model)?)?;
            let blocks = mec_decomposition(&m);
            let cert = generate_mec_certificate(&m, &blocks).ok_or_else(|| Error::Model("no MEC certificate for the decomposition".into()))?;
            for (i, b) in blocks.iter().enumerate() {
                let names: Vec<&str> = b.iter().map(|&s| m.name(s)).collect();
                println!("B{i} = {{{}}}", names.join(","));
            }
            println!("r = ({})", cert.rank.iter().map(u64::to_string).collect::<Vec<_>>().join(","));
            let path = write(&out, "mec.json", &mec_certificate_to_json(&m, &cert))?;
            println!("wrote {}", path.display());
            Ok(exit(true))
        }
        Command::UbaWitness { query, labeling: lab, verify_uba, out } => {
            let l = query.load()?;
            if verify_uba {
                for (i, a) in l.autos.iter().enumerate() {
                    let Some(u) = a.as_uba() else { continue };
                    if u.unambiguous == UnambiguityFlag::Trusted {
                        if let UnambiguityVerdict::Refuted(word) = check_unambiguous(&u) {
                            return Err(Error::Automaton(format!("automaton {i} is ambiguous on {}", word.join(" "))));
                        }
                    }
                }
            }
            let labels = labeling(&l.m, &lab)?;
            let objs = uba_objectives(&l.q, &l.autos)?;
            match uba_witness(&l.m, &objs, l.q.quantifier, &labels) {
                Ok(w) => {
                    emit_witness(&l.m, &labels, &w, &out)?;
                    Ok(exit(true))
                }
                Err(Error::Infeasible(msg)) => {
                    println!("FAILS: no witness ({msg})");
                    Ok(exit(false))
                }
                Err(e) => Err(e),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(usize::from(cli.threads)).build_global() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
