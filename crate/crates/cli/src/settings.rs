use std::path::Path;

use msgnn::error::Error;
use msgnn::network::MsgnnConfig;
use msgnn::train::TrainConfig;

use crate::Result;

/// Model and training configuration plus the explicit `key=value`
/// assignments that produced it, in order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    pub model: MsgnnConfig,
    pub train: TrainConfig,
    pub assigned: Vec<(String, String)>,
}

impl Settings {
    /// Applies one assignment; a key neither config owns is an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        if !(self.model.set(key, value)? || self.train.set(key, value)?) {
            return Err(Error::Config(format!("unknown key {key:?}")).into());
        }
        self.assigned.push((key.to_string(), value.trim().to_string()));
        Ok(())
    }

    /// Re-applies the recorded assignments on top of other configs.
    pub fn replay_onto(&self, model: &mut MsgnnConfig, train: &mut TrainConfig) -> Result<()> {
        for (k, v) in &self.assigned {
            let _ = model.set(k, v)? || train.set(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        Ok(())
    }

    /// Every key, model first, in `key=value` form.
    pub fn render(model: &MsgnnConfig, train: &TrainConfig) -> String {
        let mut out = String::new();
        for (k, v) in model.pairs().into_iter().chain(train.pairs()) {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }
}

fn split_assignment(text: &str) -> Option<(&str, &str)> {
    let (k, v) = text.split_once('=')?;
    Some((k.trim(), v.trim()))
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_settings(text: &str, origin: &str, into: &mut Settings) -> Result<()> {
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = split_assignment(line)
            .ok_or_else(|| Error::Config(format!("{origin}:{}: expected key=value, got {line:?}", no + 1)))?;
        into.set(k, v).map_err(|e| match e {
            crate::CliError::Core(Error::Config(m)) => Error::Config(format!("{origin}:{}: {m}", no + 1)).into(),
            other => other,
        })?;
    }
    Ok(())
}

/// Defaults, then the optional file, then each `--set`. Validated.
pub fn load_settings(file: Option<&Path>, sets: &[String]) -> Result<Settings> {
    let s = read_settings(file, sets)?;
    s.validate()?;
    Ok(s)
}

/// Like [`load_settings`] without validation, for callers that layer the
/// assignments over other configs first.
pub fn read_settings(file: Option<&Path>, sets: &[String]) -> Result<Settings> {
    let mut s = Settings::default();
    if let Some(path) = file {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::MissingFile(path.to_path_buf()).into())
            }
            Err(e) => {
                return Err(Error::Io {
                    path: path.to_path_buf(),
                    source: e,
                }
                .into())
            }
        };
        parse_settings(&text, &path.display().to_string(), &mut s)?;
    }
    for a in sets {
        let (k, v) = split_assignment(a).ok_or_else(|| Error::Config(format!("--set expects key=value, got {a:?}")))?;
        s.set(k, v)?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let mut s = Settings::default();
        parse_settings("# tiny\nn = 2\nm=3 # blocks\n\nlr=1e-3\n", "t", &mut s).unwrap();
        s.set("n", "3").unwrap();
        assert_eq!((s.model.subnetworks, s.model.blocks, s.train.lr), (3, 3, 1e-3));
        assert_eq!(s.assigned.len(), 4);
    }

    #[test]
    fn unknown_key_is_named() {
        let mut s = Settings::default();
        let e = parse_settings("n=2\nbogus=1\n", "cfg.txt", &mut s).unwrap_err();
        assert_eq!(e.kind(), "config");
        let msg = e.to_string();
        assert!(msg.contains("bogus") && msg.contains("cfg.txt:2"), "{msg}");
    }

    #[test]
    fn render_round_trips() {
        let mut s = Settings::default();
        s.set("k", "7").unwrap();
        s.set("milestones", "none").unwrap();
        s.set("epochs", "3").unwrap();
        let mut back = Settings::default();
        parse_settings(&Settings::render(&s.model, &s.train), "r", &mut back).unwrap();
        assert_eq!((back.model, back.train), (s.model, s.train));
    }

    #[test]
    fn invalid_values_rejected() {
        assert_eq!(load_settings(None, &["crop=30".into()]).unwrap_err().kind(), "config");
        assert_eq!(load_settings(None, &["k".into()]).unwrap_err().kind(), "config");
        assert_eq!(load_settings(None, &["n=two".into()]).unwrap_err().kind(), "config");
    }
}
