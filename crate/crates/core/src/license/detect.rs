//! Repository license detection from root-level license files.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use serde::Deserialize;

use super::{classify_license, LicenseClass};

const FINGERPRINTS: &str = include_str!("../../data/license_fingerprints.json");

/// Root-level file names examined, compared case-insensitively.
pub const LICENSE_CANDIDATES: &[&str] = &["license", "license.txt", "license.md", "copying", "copying.txt"];

#[derive(Debug, Clone, Deserialize)]
pub struct Fingerprint {
    pub license: String,
    pub phrases: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct FingerprintSet {
    pub threshold: f64,
    pub references: Vec<Fingerprint>,
}

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn contains_run(hay: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

impl FingerprintSet {
    pub fn builtin() -> &'static FingerprintSet {
        static SET: OnceLock<FingerprintSet> = OnceLock::new();
        SET.get_or_init(|| serde_json::from_str(FINGERPRINTS).expect("shipped fingerprints are valid"))
    }

    /// Best-matching reference license token for a file's text. Among
    /// references at or above the threshold the highest share wins, then
    /// the larger number of matched phrases (BSD-3 over BSD-2).
    pub fn identify(&self, text: &str) -> Option<&str> {
        let hay = tokens(text);
        let mut best: Option<(f64, usize, &str)> = None;
        for r in &self.references {
            let hits = r
                .phrases
                .iter()
                .filter(|p| contains_run(&hay, &tokens(p)))
                .count();
            let share = hits as f64 / r.phrases.len().max(1) as f64;
            if share + 1e-12 < self.threshold {
                continue;
            }
            if best.is_none_or(|(s, h, _)| share > s || (share == s && hits > h)) {
                best = Some((share, hits, r.license.as_str()));
            }
        }
        best.map(|(_, _, l)| l)
    }
}

fn spdx_identifier(text: &str) -> Option<&str> {
    text.lines().find_map(|l| {
        l.split_once("SPDX-License-Identifier:")
            .map(|(_, id)| id.trim())
            .filter(|id| !id.is_empty())
    })
}

pub fn detect_repo_license(root: &Path) -> std::io::Result<LicenseClass> {
    detect_repo_license_with(root, FingerprintSet::builtin())
}

pub fn detect_repo_license_with(root: &Path, prints: &FingerprintSet) -> std::io::Result<LicenseClass> {
    let mut files: Vec<_> = std::fs::read_dir(root)?
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_ok_and(|t| t.is_file()))
        .filter(|e| LICENSE_CANDIDATES.contains(&e.file_name().to_string_lossy().to_lowercase().as_str()))
        .map(|e| e.path())
        .collect();
    files.sort();
    if files.is_empty() {
        return Ok(LicenseClass::no_license());
    }
    let mut found: BTreeSet<LicenseClass> = BTreeSet::new();
    for path in &files {
        let text = match std::fs::read(path) {
            Ok(b) => String::from_utf8_lossy(&b).into_owned(),
            Err(e) => {
                log::warn!("cannot read {}: {e}", path.display());
                continue;
            }
        };
        let class = match prints.identify(&text) {
            Some(token) => classify_license(token),
            None => match spdx_identifier(&text) {
                Some(id) => classify_license(id),
                None => continue,
            },
        };
        if class.category.is_analyzed() {
            found.insert(class);
        }
    }
    Ok(match found.len() {
        0 => classify_license(super::OTHER),
        1 => found.into_iter().next().expect("one element"),
        _ => LicenseClass::multiple(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::license::LicenseCategory;
    use std::fs;

    pub(crate) const MIT: &str = "MIT License\n\nCopyright (c) 2023 Example Org\n\nPermission is hereby granted, free of charge, to any person obtaining a copy\nof this software and associated documentation files (the \"Software\"), to deal\nin the Software without restriction, including without limitation the rights\nto use, copy, modify, merge, publish, distribute, sublicense, and/or sell\ncopies of the Software, and to permit persons to whom the Software is\nfurnished to do so, subject to the following conditions:\n\nThe above copyright notice and this permission notice shall be included in all\ncopies or substantial portions of the Software.\n\nTHE SOFTWARE IS PROVIDED \"AS IS\", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR\nIMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,\nFITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE\nAUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER\nLIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,\nOUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE\nSOFTWARE.\n";

    const GPL3_HEAD: &str = "                    GNU GENERAL PUBLIC LICENSE\n                       Version 3, 29 June 2007\n\n Copyright (C) 2007 Free Software Foundation, Inc. <https://fsf.org/>\n Everyone is permitted to copy and distribute verbatim copies\n of this license document, but changing it is not allowed.\n\n                            Preamble\n\n  The GNU General Public License is a free, copyleft license for\nsoftware and other kinds of works.\n\n  The licenses for most software and other practical works are designed\nto take away your freedom to share and change the works.\n\n                       TERMS AND CONDITIONS\n\n  0. Definitions.\n\n  \"This License\" refers to version 3 of the GNU General Public License.\n";

    #[test]
    fn verbatim_mit() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("LICENSE"), MIT).unwrap();
        let c = detect_repo_license(dir.path()).unwrap();
        assert_eq!(c.spdx_like, "mit");
        assert_eq!(c.category, LicenseCategory::Permissive);
    }

    #[test]
    fn no_license_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("README.md"), MIT).unwrap();
        assert_eq!(detect_repo_license(dir.path()).unwrap(), LicenseClass::no_license());
    }

    #[test]
    fn conflicting_files_are_multiple() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("COPYING"), GPL3_HEAD).unwrap();
        fs::write(dir.path().join("LICENSE"), MIT).unwrap();
        assert_eq!(detect_repo_license(dir.path()).unwrap(), LicenseClass::multiple());
    }

    #[test]
    fn case_insensitive_names() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("License.md"), GPL3_HEAD).unwrap();
        assert_eq!(detect_repo_license(dir.path()).unwrap().spdx_like, "gpl-3.0-only");
    }

    #[test]
    fn unrecognized_text_is_other() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("LICENSE.txt"), "All rights reserved.").unwrap();
        assert_eq!(detect_repo_license(dir.path()).unwrap().category, LicenseCategory::Other);
    }

    #[test]
    fn spdx_line() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("LICENSE"), "SPDX-License-Identifier: Apache-2.0\n").unwrap();
        assert_eq!(detect_repo_license(dir.path()).unwrap().spdx_like, "apache-2.0");
    }

    #[test]
    fn partial_text_below_threshold() {
        let half: String = MIT.lines().take(8).collect::<Vec<_>>().join("\n");
        assert_eq!(FingerprintSet::builtin().identify(&half), None);
    }

    #[test]
    fn bsd3_beats_bsd2() {
        let bsd3 = "Redistribution and use in source and binary forms, with or without modification, are permitted provided that the following conditions are met:\n1. Redistributions of source code must retain the above copyright notice.\n2. Redistributions in binary form must reproduce the above copyright notice.\n3. Neither the name of the copyright holder nor the names of its contributors may be used to endorse or promote products derived from this software without specific prior written permission.\nTHIS SOFTWARE IS PROVIDED BY THE COPYRIGHT HOLDERS AND CONTRIBUTORS \"AS IS\"";
        assert_eq!(FingerprintSet::builtin().identify(bsd3), Some("bsd-3-clause"));
    }

    #[test]
    fn unreadable_root_errors() {
        assert!(detect_repo_license(Path::new("/nonexistent/root")).is_err());
    }
}
