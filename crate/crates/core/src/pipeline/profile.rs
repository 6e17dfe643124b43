use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{lookup_model, ModelDialect};

/// How a profile turns a prepared unit into assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    /// Run `compile_command` then `disassemble_command`.
    #[default]
    External,
    /// Read `<asm_dir>/<test>.litmus`; no tools are run.
    PrebuiltAsm,
    /// The built-in AArch64 code generator; no tools are run.
    Reference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompilerProfile {
    pub name: String,
    #[serde(default)]
    pub kind: ProfileKind,
    /// Argument vector with `{src}` and `{obj}` placeholders.
    #[serde(default)]
    pub compile_command: Vec<String>,
    /// Argument vector with an `{obj}` placeholder; stdout is the listing.
    #[serde(default)]
    pub disassemble_command: Vec<String>,
    #[serde(default = "default_isa")]
    pub isa: String,
    pub target_model: String,
    pub source_model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asm_dir: Option<PathBuf>,
    /// Per-stage limit for external tools, in seconds.
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Reference profiles only.
    #[serde(default = "default_fold")]
    pub fold_constants: bool,
}

fn default_isa() -> String {
    "aarch64".into()
}

fn default_timeout() -> u64 {
    60
}

fn default_fold() -> bool {
    true
}

impl CompilerProfile {
    /// The built-in code generator, checked against `source_model`.
    pub fn reference(name: &str, source_model: &str) -> Self {
        CompilerProfile {
            name: name.into(),
            kind: ProfileKind::Reference,
            compile_command: Vec::new(),
            disassemble_command: Vec::new(),
            isa: default_isa(),
            target_model: "armv8_lite".into(),
            source_model: source_model.into(),
            asm_dir: None,
            timeout_secs: default_timeout(),
            fold_constants: true,
        }
    }

    pub fn prebuilt(name: &str, asm_dir: impl Into<PathBuf>, source_model: &str) -> Self {
        CompilerProfile {
            kind: ProfileKind::PrebuiltAsm,
            asm_dir: Some(asm_dir.into()),
            ..Self::reference(name, source_model)
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |why: String| Error::InvalidProfile(format!("{}: {why}", self.name));
        if self.isa != "aarch64" {
            return Err(bad(format!("unsupported isa `{}`", self.isa)));
        }
        for (model, dialect) in [(&self.source_model, ModelDialect::Source), (&self.target_model, ModelDialect::Asm)] {
            let m = lookup_model(model)?;
            if m.dialect != dialect {
                return Err(Error::DialectMismatch {
                    model: m.name,
                    expected: dialect.to_string(),
                });
            }
        }
        match self.kind {
            ProfileKind::External => {
                let has = |argv: &[String], p: &str| argv.iter().any(|a| a.contains(p));
                if self.compile_command.is_empty() || self.disassemble_command.is_empty() {
                    return Err(bad("external profiles need compile and disassemble commands".into()));
                }
                if !has(&self.compile_command, "{src}") || !has(&self.compile_command, "{obj}") {
                    return Err(bad("compile_command must mention {src} and {obj}".into()));
                }
                if !has(&self.disassemble_command, "{obj}") {
                    return Err(bad("disassemble_command must mention {obj}".into()));
                }
                if !self.compile_command.iter().any(|a| a == "-c" || a == "-S") {
                    return Err(bad("compile_command must stop before linking (-c or -S)".into()));
                }
            }
            ProfileKind::PrebuiltAsm if self.asm_dir.is_none() => {
                return Err(bad("prebuilt-asm profiles need asm_dir".into()));
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ProfileDoc {
    List(Vec<CompilerProfile>),
    Wrapped { profiles: Vec<CompilerProfile> },
}

/// Parse and validate a profiles document: a JSON array of profiles, or an
/// object with a `profiles` array. Relative `asm_dir`s resolve against `base`.
pub fn parse_profiles(text: &str, base: Option<&Path>) -> Result<Vec<CompilerProfile>, Error> {
    let mut profiles = match serde_json::from_str(text)? {
        ProfileDoc::List(v) | ProfileDoc::Wrapped { profiles: v } => v,
    };
    for p in &mut profiles {
        if let (Some(dir), Some(base)) = (&p.asm_dir, base) {
            if dir.is_relative() {
                p.asm_dir = Some(base.join(dir));
            }
        }
        p.validate()?;
    }
    Ok(profiles)
}

pub fn load_profiles(path: &Path) -> Result<Vec<CompilerProfile>, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_profiles(&text, path.parent())
}

/// Profiles available without a profiles file.
pub fn builtin_profiles() -> Vec<CompilerProfile> {
    vec![
        CompilerProfile::reference("reference-aarch64", "rc11_lite"),
        CompilerProfile::reference("reference-aarch64-lb", "rc11_lb"),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    const CLANG: &str = r#"{"profiles": [{
        "name": "clang-O2-aarch64",
        "compile_command": ["clang", "--target=aarch64-linux-gnu", "-O2", "-c", "-g", "{src}", "-o", "{obj}"],
        "disassemble_command": ["llvm-objdump", "-dr", "{obj}"],
        "isa": "aarch64",
        "target_model": "armv8_lite",
        "source_model": "rc11_lite"
    }]}"#;

    #[test]
    fn wrapped_and_bare_documents() {
        let ps = parse_profiles(CLANG, None).unwrap();
        assert_eq!(ps[0].kind, ProfileKind::External);
        assert_eq!(ps[0].timeout_secs, 60);
        let bare = serde_json::to_string(&ps).unwrap();
        assert_eq!(parse_profiles(&bare, None).unwrap(), ps);
    }

    #[test]
    fn invalid_profiles_are_rejected() {
        let unknown = CLANG.replace("rc11_lite", "nope");
        assert!(matches!(parse_profiles(&unknown, None), Err(Error::UnknownModel(_))));
        let swapped = CLANG.replace("\"armv8_lite\"", "\"sc\"");
        assert!(matches!(parse_profiles(&swapped, None), Err(Error::DialectMismatch { .. })));
        let linking = CLANG.replace("\"-c\", ", "");
        assert!(matches!(parse_profiles(&linking, None), Err(Error::InvalidProfile(_))));
        let no_obj = CLANG.replace("\"-o\", \"{obj}\"", "\"-o\", \"a.o\"");
        assert!(matches!(parse_profiles(&no_obj, None), Err(Error::InvalidProfile(_))));
    }

    #[test]
    fn relative_asm_dir_resolves_against_the_document() {
        let doc = r#"[{"name": "golden", "kind": "prebuilt-asm", "asm_dir": "asm",
                       "target_model": "armv8_lite", "source_model": "rc11_lite"}]"#;
        let ps = parse_profiles(doc, Some(Path::new("/cfg"))).unwrap();
        assert_eq!(ps[0].asm_dir.as_deref(), Some(Path::new("/cfg/asm")));
    }
}
