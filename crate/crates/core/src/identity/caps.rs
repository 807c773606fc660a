use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

const DEFAULT_POLICY: &str = include_str!("../../policy/default.caps");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct PolicyParseError {
    pub line: usize,
    pub message: String,
}

/// Role to permitted-operation white list. Anything absent is denied.
///
/// Role names are case-insensitive and stored upper-case; operation names are
/// kept verbatim.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CapabilityList {
    rules: BTreeMap<String, BTreeSet<String>>,
}

impl CapabilityList {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn default_policy() -> Self {
        Self::parse(DEFAULT_POLICY).expect("bundled policy parses")
    }

    /// Parses `role: op1, op2` lines. `#` starts a comment; a role may
    /// appear on several lines and its operations accumulate.
    pub fn parse(text: &str) -> Result<Self, Vec<PolicyParseError>> {
        let mut caps = CapabilityList::empty();
        let mut errors = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((role, ops)) = line.split_once(':') else {
                errors.push(PolicyParseError {
                    line: i + 1,
                    message: "expected `role: op, ...`".into(),
                });
                continue;
            };
            let role = role.trim();
            if role.is_empty() || !role.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                errors.push(PolicyParseError {
                    line: i + 1,
                    message: format!("invalid role name `{role}`"),
                });
                continue;
            }
            let entry = caps.rules.entry(role.to_ascii_uppercase()).or_default();
            for op in ops.split(',').map(str::trim).filter(|o| !o.is_empty()) {
                if op.chars().any(char::is_whitespace) {
                    errors.push(PolicyParseError {
                        line: i + 1,
                        message: format!("operation `{op}` contains whitespace"),
                    });
                } else {
                    entry.insert(op.to_string());
                }
            }
        }
        if errors.is_empty() {
            Ok(caps)
        } else {
            Err(errors)
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (role, ops) in &self.rules {
            let ops: Vec<&str> = ops.iter().map(String::as_str).collect();
            let _ = writeln!(out, "{role}: {}", ops.join(", "));
        }
        out
    }

    pub fn grant(&mut self, role: &str, operation: &str) {
        self.rules
            .entry(role.trim().to_ascii_uppercase())
            .or_default()
            .insert(operation.to_string());
    }

    /// Removes one operation. Other grants are untouched.
    pub fn revoke(&mut self, role: &str, operation: &str) -> bool {
        self.rules
            .get_mut(&role.trim().to_ascii_uppercase())
            .is_some_and(|ops| ops.remove(operation))
    }

    pub fn check(&self, role: &str, operation: &str) -> Decision {
        match self.rules.get(&role.trim().to_ascii_uppercase()) {
            Some(ops) if ops.contains(operation) => Decision::Allow,
            _ => Decision::Deny,
        }
    }

    pub fn allows(&self, role: &str, operation: &str) -> bool {
        self.check(role, operation) == Decision::Allow
    }

    pub fn operations(&self, role: &str) -> impl Iterator<Item = &str> {
        self.rules
            .get(&role.trim().to_ascii_uppercase())
            .into_iter()
            .flat_map(|ops| ops.iter().map(String::as_str))
    }
}

pub fn check_capability(caps: &CapabilityList, role: &str, operation: &str) -> Decision {
    caps.check(role, operation)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_policy_examples() {
        let caps = CapabilityList::default_policy();
        assert_eq!(caps.check("RSMS", "issue_certificate"), Decision::Allow);
        assert_eq!(caps.check("RNMS", "decrypt_payload"), Decision::Deny);
        assert_eq!(caps.check("DEVICE", "issue_certificate"), Decision::Deny);
        assert_eq!(caps.check("AUDITOR", "inspect_outer"), Decision::Deny);
        assert_eq!(caps.check("rsms", "issue_certificate"), Decision::Allow);
    }

    #[test]
    fn text_round_trip() {
        let caps = CapabilityList::default_policy();
        assert_eq!(CapabilityList::parse(&caps.to_text()).unwrap(), caps);
    }

    #[test]
    fn parse_errors_are_aggregated() {
        let errs =
            CapabilityList::parse("RSMS: a\nbogus line\nR S: x\nKDMS: two words\n").unwrap_err();
        let lines: Vec<usize> = errs.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 3, 4]);
    }

    #[test]
    fn repeated_role_lines_accumulate() {
        let caps = CapabilityList::parse("NGDM: a\nNGDM: b").unwrap();
        assert!(caps.allows("NGDM", "a") && caps.allows("NGDM", "b"));
    }

    #[test]
    fn runtime_modification() {
        let mut caps = CapabilityList::default_policy();
        caps.grant("RNMS", "audit");
        assert!(caps.allows("RNMS", "audit"));
        assert!(caps.allows("RNMS", "route_container"));
        assert!(caps.revoke("RNMS", "audit"));
        assert!(!caps.allows("RNMS", "audit"));
        assert!(!caps.revoke("NOBODY", "audit"));
    }
}
