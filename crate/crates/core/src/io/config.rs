//! `key = value` run configuration.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::labeling::LabelingConfig;
use crate::refine::RefineConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub labeling: LabelingConfig,
    pub refine: RefineConfig,
    pub seed: u64,
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            labeling: LabelingConfig::default(),
            refine: RefineConfig::default(),
            seed: 0,
            output_dir: "out".into(),
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str, line: usize) -> Result<T> {
    raw.parse().map_err(|_| {
        Error::parse(
            format!("config line {line}"),
            format!("bad value '{raw}' for {key}"),
        )
    })
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.labeling.validate()?;
        self.refine.validate()
    }

    pub fn serialize(&self) -> String {
        let l = &self.labeling;
        let r = &self.refine;
        let mut out = String::from("# labeling\n");
        let _ = writeln!(out, "beta = {}", l.beta);
        let _ = writeln!(out, "mu = {}", l.mu);
        let _ = writeln!(out, "smooth_same = {}", l.smooth_same);
        let _ = writeln!(out, "smooth_diff = {}", l.smooth_diff);
        let _ = writeln!(out, "min_angle_variance = {}", l.min_angle_variance);
        out.push_str("# refinement\n");
        let _ = writeln!(out, "window_radius = {}", r.window_radius);
        let _ = writeln!(out, "step_size = {}", r.step_size);
        let _ = writeln!(out, "iterations_per_level = {}", r.iterations_per_level);
        let _ = writeln!(out, "levels = {}", r.levels);
        let _ = writeln!(out, "lambda_photo = {}", r.lambda_photo);
        let _ = writeln!(out, "lambda_sem = {}", r.lambda_sem);
        let _ = writeln!(out, "lambda_smooth = {}", r.lambda_smooth);
        let _ = writeln!(out, "mask_blur_sigma = {}", r.mask_blur_sigma);
        let _ = writeln!(out, "grazing_threshold = {}", r.grazing_threshold);
        out.push_str("# run\n");
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "output_dir = {}", self.output_dir);
        out
    }

    /// Parses a configuration; keys not given keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line.split_once('=').ok_or_else(|| {
                Error::parse(format!("config line {n}"), "expected 'key = value'")
            })?;
            let (key, raw) = (key.trim(), raw.trim());
            match key {
                "beta" => c.labeling.beta = value(key, raw, n)?,
                "mu" => c.labeling.mu = value(key, raw, n)?,
                "smooth_same" => c.labeling.smooth_same = value(key, raw, n)?,
                "smooth_diff" => c.labeling.smooth_diff = value(key, raw, n)?,
                "min_angle_variance" => c.labeling.min_angle_variance = value(key, raw, n)?,
                "window_radius" => c.refine.window_radius = value(key, raw, n)?,
                "step_size" => c.refine.step_size = value(key, raw, n)?,
                "iterations_per_level" => c.refine.iterations_per_level = value(key, raw, n)?,
                "levels" => c.refine.levels = value(key, raw, n)?,
                "lambda_photo" => c.refine.lambda_photo = value(key, raw, n)?,
                "lambda_sem" => c.refine.lambda_sem = value(key, raw, n)?,
                "lambda_smooth" => c.refine.lambda_smooth = value(key, raw, n)?,
                "mask_blur_sigma" => c.refine.mask_blur_sigma = value(key, raw, n)?,
                "grazing_threshold" => c.refine.grazing_threshold = value(key, raw, n)?,
                "seed" => c.seed = value(key, raw, n)?,
                "output_dir" => c.output_dir = raw.to_string(),
                _ => {
                    return Err(Error::parse(
                        format!("config line {n}"),
                        format!("unknown key '{key}'"),
                    ))
                }
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_appear_verbatim() {
        let text = RunConfig::default().serialize();
        for line in [
            "beta = 0.1",
            "mu = 1.5",
            "iterations_per_level = 5",
            "smooth_same = 0.8",
            "smooth_diff = 0.2",
        ] {
            assert!(text.lines().any(|l| l == line), "missing '{line}'");
        }
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::parse("gamma = 1\n").is_err());
        assert!(RunConfig::parse("beta = x\n").is_err());
        assert!(RunConfig::parse("beta 0.1\n").is_err());
        assert!(RunConfig::parse("window_radius = 0\n").is_err());
        let c = RunConfig::parse("# comment\n\nmu = 2 # trailing\n").unwrap();
        assert_eq!(c.labeling.mu, 2.0);
    }

    proptest! {
        #[test]
        fn round_trip(beta in 0.001..0.3f64, step in 0.01..1.0f64, radius in 1usize..6, seed in any::<u64>()) {
            let mut c = RunConfig::default();
            c.labeling.beta = beta;
            c.refine.step_size = step;
            c.refine.window_radius = radius;
            c.seed = seed;
            prop_assert_eq!(RunConfig::parse(&c.serialize()).unwrap(), c);
        }
    }
}
