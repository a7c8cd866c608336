//! Network definition files.
//!
//! A network file is TOML:
//!
//! ```toml
//! name = "bistable"
//! species = ["X1", "X2"]
//! volume = 1.0
//! # Reaction numbers (1-based, in file order) of the fast reactions.
//! fast = [5, 6]
//!
//! [[reaction]]
//! name = "R2"                          # optional, defaults to R<number>
//! equation = "X1 + X2 -> X2 @ 0.04"
//! convention = "combined"              # optional, default "mass-action"
//!
//! [projection]
//! coefficients = [1, 2]                # S = X1 + 2 X2
//! grid = [0, 2500]                     # inclusive
//! adjust = "X1"                        # optional, species reset by the CSSA
//!
//! [qssma]                              # optional analytic closure
//! model = "bistable"
//! k1 = 32.0
//! # ...
//!
//! initial = [100, 100]                 # optional start state for `simulate`
//! ```
//!
//! Each side of an equation is a `+`-separated list of `[count] species`
//! terms; `0`, `∅` or an empty side is the empty complex. The `@` part is the
//! rate constant. With the default `mass-action` convention the propensity
//! coefficient is `k · V^(1 − order)`; with `combined` the constant is used as
//! given.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::estimators::QssmaModel;
use crate::network::{RateConvention, Reaction, ReactionNetwork, SlowProjection};

/// A parsed network file.
#[derive(Clone, Debug)]
pub struct NetworkFile {
    pub name: String,
    pub network: ReactionNetwork,
    pub projection: SlowProjection,
    pub qssma: Option<QssmaModel>,
    pub initial: Option<Vec<i64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    name: Option<String>,
    species: Vec<String>,
    #[serde(default = "one")]
    volume: f64,
    #[serde(default)]
    fast: Vec<usize>,
    #[serde(rename = "reaction", default)]
    reactions: Vec<RawReaction>,
    projection: RawProjection,
    qssma: Option<QssmaModel>,
    initial: Option<Vec<i64>>,
}

fn one() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReaction {
    name: Option<String>,
    equation: String,
    #[serde(default)]
    convention: RateConvention,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProjection {
    coefficients: Vec<i64>,
    grid: [i64; 2],
    adjust: Option<String>,
}

/// Reads a network file. A path without extension also tries `<path>.toml`.
pub fn load_network(path: &Path) -> Result<NetworkFile> {
    let resolved = resolve(path);
    let text = fs::read_to_string(&resolved).map_err(|e| Error::Parse {
        path: resolved.clone(),
        message: e.to_string(),
    })?;
    parse_network(&text, &resolved)
}

fn resolve(path: &Path) -> PathBuf {
    if path.exists() || path.extension().is_some() {
        return path.to_path_buf();
    }
    let with = path.with_extension("toml");
    if with.exists() {
        with
    } else {
        path.to_path_buf()
    }
}

/// Parses network file contents; `path` is only used in error messages.
pub fn parse_network(text: &str, path: &Path) -> Result<NetworkFile> {
    let err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let raw: RawFile = toml::from_str(text).map_err(|e| err(e.to_string()))?;
    let species = raw.species;
    for (i, s) in species.iter().enumerate() {
        if !is_identifier(s) {
            return Err(err(format!("invalid species name `{s}`")));
        }
        if species[..i].contains(s) {
            return Err(err(format!("species `{s}` listed twice")));
        }
    }
    let mut reactions = Vec::with_capacity(raw.reactions.len());
    for (j, r) in raw.reactions.iter().enumerate() {
        let name = r.name.clone().unwrap_or_else(|| format!("R{}", j + 1));
        let (reactants, products, rate) =
            parse_equation(&r.equation, &species).map_err(|m| err(format!("reaction {name}: {m}")))?;
        reactions.push(Reaction::new(name, reactants, products, rate, r.convention));
    }
    let mut fast = Vec::with_capacity(raw.fast.len());
    for &k in &raw.fast {
        if k == 0 || k > reactions.len() {
            return Err(err(format!(
                "fast reaction number {k} out of range 1..={}",
                reactions.len()
            )));
        }
        fast.push(k - 1);
    }
    let network = ReactionNetwork::new(species.clone(), reactions, raw.volume, &fast)?;

    let p = raw.projection;
    let adjustment = match &p.adjust {
        Some(name) => network
            .species_index(name)
            .ok_or_else(|| err(format!("unknown adjustment species `{name}`")))?,
        None => p
            .coefficients
            .iter()
            .position(|&c| c.abs() == 1)
            .ok_or_else(|| err("no species with slow coefficient ±1 to adjust".into()))?,
    };
    let projection = SlowProjection::new(p.coefficients, p.grid[0], p.grid[1], adjustment);

    if let Some(x) = &raw.initial {
        if x.len() != species.len() || x.iter().any(|&v| v < 0) {
            return Err(err(format!("initial state {x:?} is not a valid state")));
        }
    }
    Ok(NetworkFile {
        name: raw.name.unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        }),
        network,
        projection,
        qssma: raw.qssma,
        initial: raw.initial,
    })
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_')
}

/// `"2 X1 -> X2 @ 10"` → reactant and product stoichiometries and the rate.
fn parse_equation(eq: &str, species: &[String]) -> std::result::Result<(Vec<u32>, Vec<u32>, f64), String> {
    let (lhs, rest) = eq.split_once("->").ok_or("missing `->`")?;
    let (rhs, rate) = rest.split_once('@').ok_or("missing `@ rate`")?;
    let rate: f64 = rate
        .trim()
        .parse()
        .map_err(|_| format!("invalid rate `{}`", rate.trim()))?;
    Ok((parse_complex(lhs, species)?, parse_complex(rhs, species)?, rate))
}

fn parse_complex(side: &str, species: &[String]) -> std::result::Result<Vec<u32>, String> {
    let mut out = vec![0u32; species.len()];
    let side = side.trim();
    if side.is_empty() || side == "0" || side == "∅" {
        return Ok(out);
    }
    for term in side.split('+') {
        let term = term.trim();
        let split = term.find(|c: char| !c.is_ascii_digit()).unwrap_or(term.len());
        let (count, name) = term.split_at(split);
        let count: u32 = if count.is_empty() {
            1
        } else {
            count.parse().map_err(|_| format!("invalid count in `{term}`"))?
        };
        let name = name.trim();
        let i = species
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| format!("unknown species `{name}`"))?;
        out[i] += count;
    }
    Ok(out)
}
