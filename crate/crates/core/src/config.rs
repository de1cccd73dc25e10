//! Flat `key = value` configuration files and the effective-config echo.
//!
//! Lines starting with `#` or `;` and blank lines are ignored, as are
//! `[section]` headers. Later assignments override earlier ones, so command-line
//! overrides are applied by appending them to the file's pairs.

use std::str::FromStr;

use crate::engine::{Alignment, RunConfig};
use crate::error::{Error, Result};

pub fn parse_ini(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') || (line.starts_with('[') && line.ends_with(']')) {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got '{line}'", i + 1)))?;
        let key = k.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        pairs.push((normalize_key(key), v.trim().to_string()));
    }
    Ok(pairs)
}

/// `burn-in` and `burn_in` name the same key.
pub fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got '{value}'"))),
    }
}

impl RunConfig {
    /// Set one key; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = normalize_key(key);
        let k = key.as_str();
        match k {
            "iterations" => self.iterations = parse(k, value)?,
            "burn_in" => self.burn_in = parse(k, value)?,
            "thinning" => self.thinning = parse(k, value)?,
            "m" | "num_features" => self.num_features = parse(k, value)?,
            "d" | "latent_dim" => self.latent_dim = parse(k, value)?,
            "k0" | "initial_clusters" => self.initial_clusters = parse(k, value)?,
            "alpha0" | "initial_alpha" => self.initial_alpha = parse(k, value)?,
            "kind" => self.kind = value.parse()?,
            "seed" => self.seed = parse(k, value)?,
            "alpha_shape" => self.alpha_shape = parse(k, value)?,
            "alpha_rate" => self.alpha_rate = parse(k, value)?,
            "niw_lambda" => self.niw_lambda = parse(k, value)?,
            "niw_nu" => self.niw_nu = if value == "auto" { None } else { Some(parse(k, value)?) },
            "niw_scale" => self.niw_scale = parse(k, value)?,
            "coef_var" => self.coef_var = parse(k, value)?,
            "nig_precision" => self.nig_precision = parse(k, value)?,
            "noise_shape" => self.noise_shape = parse(k, value)?,
            "noise_scale" => self.noise_scale = parse(k, value)?,
            "dispersion_shape" => self.dispersion_shape = parse(k, value)?,
            "dispersion_rate_shape" => self.dispersion_rate_shape = parse(k, value)?,
            "dispersion_rate_rate" => self.dispersion_rate_rate = parse(k, value)?,
            "optimizer_steps" => self.optimizer.max_steps = parse(k, value)?,
            "optimizer_step_size" => self.optimizer.initial_step = parse(k, value)?,
            "optimizer_tolerance" => self.optimizer.tolerance = parse(k, value)?,
            "alignment" => self.alignment = Alignment::parse(value)?,
            "prior_only" => self.prior_only = parse_bool(k, value)?,
            "stage_assignments" => self.stages.assignments = parse_bool(k, value)?,
            "stage_components" => self.stages.components = parse_bool(k, value)?,
            "stage_frequency_mh" => self.stages.frequency_mh = parse_bool(k, value)?,
            "stage_concentration" => self.stages.concentration = parse_bool(k, value)?,
            "stage_likelihood" => self.stages.likelihood = parse_bool(k, value)?,
            "stage_latent_map" => self.stages.latent_map = parse_bool(k, value)?,
            "stage_standardize" => self.stages.standardize = parse_bool(k, value)?,
            _ => return Err(Error::Config(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every key with its effective value, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let s = &self.stages;
        let o = &self.optimizer;
        let entries: Vec<(&str, String)> = vec![
            ("kind", self.kind.to_string()),
            ("seed", self.seed.to_string()),
            ("iterations", self.iterations.to_string()),
            ("burn_in", self.burn_in.to_string()),
            ("thinning", self.thinning.to_string()),
            ("m", self.num_features.to_string()),
            ("d", self.latent_dim.to_string()),
            ("k0", self.initial_clusters.to_string()),
            ("alpha0", self.initial_alpha.to_string()),
            ("alpha_shape", self.alpha_shape.to_string()),
            ("alpha_rate", self.alpha_rate.to_string()),
            ("niw_lambda", self.niw_lambda.to_string()),
            ("niw_nu", self.niw_nu.map_or("auto".to_string(), |v| v.to_string())),
            ("niw_scale", self.niw_scale.to_string()),
            ("coef_var", self.coef_var.to_string()),
            ("nig_precision", self.nig_precision.to_string()),
            ("noise_shape", self.noise_shape.to_string()),
            ("noise_scale", self.noise_scale.to_string()),
            ("dispersion_shape", self.dispersion_shape.to_string()),
            ("dispersion_rate_shape", self.dispersion_rate_shape.to_string()),
            ("dispersion_rate_rate", self.dispersion_rate_rate.to_string()),
            ("optimizer_steps", o.max_steps.to_string()),
            ("optimizer_step_size", o.initial_step.to_string()),
            ("optimizer_tolerance", o.tolerance.to_string()),
            ("alignment", self.alignment.name().to_string()),
            ("prior_only", self.prior_only.to_string()),
            ("stage_assignments", s.assignments.to_string()),
            ("stage_components", s.components.to_string()),
            ("stage_frequency_mh", s.frequency_mh.to_string()),
            ("stage_concentration", s.concentration.to_string()),
            ("stage_likelihood", s.likelihood.to_string()),
            ("stage_latent_map", s.latent_map.to_string()),
            ("stage_standardize", s.standardize.to_string()),
        ];
        entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

pub fn pairs_to_ini(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihoods::LikelihoodKind;

    #[test]
    fn parse_and_override() {
        let mut pairs = parse_ini("# run\n[fit]\nkind = poisson\niterations = 50\nburn-in = 10\n\nm=20\n").unwrap();
        pairs.push(("iterations".into(), "60".into()));
        let cfg = RunConfig::from_pairs(&pairs).unwrap();
        assert_eq!(cfg.kind, LikelihoodKind::Poisson);
        assert_eq!((cfg.iterations, cfg.burn_in, cfg.num_features), (60, 10, 20));
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig { seed: 9, niw_nu: Some(5.5), prior_only: true, ..Default::default() };
        cfg.stages.frequency_mh = false;
        let text = pairs_to_ini(&cfg.to_pairs());
        let back = RunConfig::from_pairs(&parse_ini(&text).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_ini("oops"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::default().set("bogus", "1"), Err(Error::Config(_))));
        let err = RunConfig::default().set("kind", "gamma").unwrap_err().to_string();
        assert!(err.contains("poisson"));
        let pairs = parse_ini("iterations = 10\nburn_in = 10").unwrap();
        assert!(RunConfig::from_pairs(&pairs).is_err());
    }
}
