//! TOML portfolio config: the metadata tree plus, per layer, the ELT CSV
//! files it covers and their FT1 terms (the CSVs carry only event/loss
//! pairs).
//!
//! ```toml
//! portfolio = 1
//!
//! [[programs]]
//! id = 1
//!
//! [[programs.layers]]
//! id = 1
//! elt_files = ["elt_1.csv", "elt_2.csv"]
//! elt_terms = [
//!     { retention = 10.0, limit = 1000.0 },
//!     { retention = 0.0, limit = "inf" },
//! ]
//! occurrence = { retention = 20.0, limit = 120.0 }
//! aggregate = { retention = 50.0, limit = 200.0 }
//! ```
//!
//! A limit is a number, the string "inf", or TOML's native `inf`.
//! `elt_terms` is optional (identity terms) but must match `elt_files` in
//! length when present. Config errors name the offending key path.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::model::{
    AggregateTerms, EltTerms, Layer, ModelError, OccurrenceTerms, Portfolio, Program,
    MAX_ELTS_PER_LAYER, MAX_PROGRAMS,
};

/// One ELT the config references: where its CSV lives and its FT1 terms.
///
/// `elt_id` is positional (first appearance in config order); two layers
/// referencing the same path with the same terms share one id. Relative
/// paths are resolved against the config file's directory by the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct EltSource {
    pub elt_id: u32,
    pub path: String,
    pub terms: EltTerms,
}

/// Parsed portfolio config: the metadata tree and the ELT files to load.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioConfig {
    pub portfolio: Portfolio,
    pub elt_sources: Vec<EltSource>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum LimitValue {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerms {
    retention: f64,
    limit: LimitValue,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    id: u32,
    elt_files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    elt_terms: Option<Vec<RawTerms>>,
    occurrence: RawTerms,
    aggregate: RawTerms,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProgram {
    id: u32,
    layers: Vec<RawLayer>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    portfolio: u32,
    programs: Vec<RawProgram>,
}

fn config_err(at: impl Into<String>, message: impl ToString) -> IoError {
    IoError::Config { at: at.into(), message: message.to_string() }
}

fn parse_limit(value: &LimitValue, at: &str) -> Result<f64, IoError> {
    match value {
        LimitValue::Number(limit) => Ok(*limit),
        LimitValue::Text(text) if text == "inf" => Ok(f64::INFINITY),
        LimitValue::Text(text) => {
            Err(config_err(at, format!("limit must be a number or \"inf\", got '{text}'")))
        }
    }
}

fn parse_terms<T>(
    raw: &RawTerms,
    at: &str,
    build: impl Fn(f64, f64) -> Result<T, ModelError>,
) -> Result<T, IoError> {
    let limit = parse_limit(&raw.limit, at)?;
    build(raw.retention, limit).map_err(|err| config_err(at, err))
}

/// Parses and validates a portfolio config from TOML text.
pub fn read_portfolio_config(text: &str) -> Result<PortfolioConfig, IoError> {
    let raw: RawConfig = toml::from_str(text).map_err(|err| config_err("config", err))?;
    if raw.programs.is_empty() || raw.programs.len() > MAX_PROGRAMS {
        return Err(config_err(
            "programs",
            format!("{} programs, expected 1 to {MAX_PROGRAMS}", raw.programs.len()),
        ));
    }

    let mut elt_sources: Vec<EltSource> = Vec::new();
    // Key: (path, exact term bits); value: assigned elt id.
    let mut seen: HashMap<(String, u64, u64), u32> = HashMap::new();
    let mut programs = Vec::with_capacity(raw.programs.len());
    for (pi, raw_program) in raw.programs.iter().enumerate() {
        let mut layers = Vec::with_capacity(raw_program.layers.len());
        for (li, raw_layer) in raw_program.layers.iter().enumerate() {
            let at = format!("programs[{pi}].layers[{li}]");
            if raw_layer.elt_files.is_empty() || raw_layer.elt_files.len() > MAX_ELTS_PER_LAYER {
                return Err(config_err(
                    format!("{at}.elt_files"),
                    format!(
                        "{} files, expected 1 to {MAX_ELTS_PER_LAYER}",
                        raw_layer.elt_files.len()
                    ),
                ));
            }
            if let Some(terms) = &raw_layer.elt_terms {
                if terms.len() != raw_layer.elt_files.len() {
                    return Err(config_err(
                        format!("{at}.elt_terms"),
                        format!(
                            "{} term entries for {} elt_files",
                            terms.len(),
                            raw_layer.elt_files.len()
                        ),
                    ));
                }
            }
            let occurrence =
                parse_terms(&raw_layer.occurrence, &format!("{at}.occurrence"), |r, l| {
                    OccurrenceTerms::new(r, l)
                })?;
            let aggregate =
                parse_terms(&raw_layer.aggregate, &format!("{at}.aggregate"), |r, l| {
                    AggregateTerms::new(r, l)
                })?;

            let mut elt_refs = Vec::with_capacity(raw_layer.elt_files.len());
            for (fi, path) in raw_layer.elt_files.iter().enumerate() {
                let terms = match &raw_layer.elt_terms {
                    Some(raw_terms) => parse_terms(
                        &raw_terms[fi],
                        &format!("{at}.elt_terms[{fi}]"),
                        EltTerms::new,
                    )?,
                    None => EltTerms::identity(),
                };
                let key = (path.clone(), terms.retention.to_bits(), terms.limit.to_bits());
                let elt_id = *seen.entry(key).or_insert_with(|| {
                    let elt_id = elt_sources.len() as u32 + 1;
                    elt_sources.push(EltSource { elt_id, path: path.clone(), terms });
                    elt_id
                });
                elt_refs.push(elt_id);
            }

            layers.push(
                Layer::new(raw_layer.id, elt_refs, occurrence, aggregate)
                    .map_err(|err| config_err(&at, err))?,
            );
        }
        programs.push(
            Program::new(raw_program.id, layers)
                .map_err(|err| config_err(format!("programs[{pi}]"), err))?,
        );
    }
    let portfolio = Portfolio::new(raw.portfolio, programs)
        .map_err(|err| config_err("programs", err))?;
    Ok(PortfolioConfig { portfolio, elt_sources })
}

fn raw_terms(retention: f64, limit: f64) -> RawTerms {
    let limit = if limit == f64::INFINITY {
        LimitValue::Text("inf".to_string())
    } else {
        LimitValue::Number(limit)
    };
    RawTerms { retention, limit }
}

/// Renders a portfolio and its ELT sources as config TOML. Every layer
/// elt_ref must have a matching source; reading the output back yields an
/// equal [`PortfolioConfig`] provided elt ids follow first-appearance
/// order (as [`read_portfolio_config`] assigns them).
pub fn write_portfolio_config(
    portfolio: &Portfolio,
    elt_sources: &[EltSource],
) -> Result<String, IoError> {
    let by_id: HashMap<u32, &EltSource> =
        elt_sources.iter().map(|source| (source.elt_id, source)).collect();
    let mut programs = Vec::with_capacity(portfolio.programs.len());
    for program in &portfolio.programs {
        let mut layers = Vec::with_capacity(program.layers.len());
        for layer in &program.layers {
            let mut elt_files = Vec::with_capacity(layer.elt_refs.len());
            let mut elt_terms = Vec::with_capacity(layer.elt_refs.len());
            for &elt_id in &layer.elt_refs {
                let source = by_id.get(&elt_id).ok_or_else(|| {
                    config_err("elt_sources", format!("no source for elt id {elt_id}"))
                })?;
                elt_files.push(source.path.clone());
                elt_terms.push(raw_terms(source.terms.retention, source.terms.limit));
            }
            layers.push(RawLayer {
                id: layer.layer_id,
                elt_files,
                elt_terms: Some(elt_terms),
                occurrence: raw_terms(layer.occurrence.retention, layer.occurrence.limit),
                aggregate: raw_terms(layer.aggregate.retention, layer.aggregate.limit),
            });
        }
        programs.push(RawProgram { id: program.program_id, layers });
    }
    let raw = RawConfig { portfolio: portfolio.portfolio_id, programs };
    let body = toml::to_string_pretty(&raw).map_err(|err| config_err("config", err))?;
    let mut out = String::new();
    let _ = writeln!(out, "# Portfolio config: programs, layers, and their ELT files.");
    out.push_str(&body);
    Ok(out)
}
