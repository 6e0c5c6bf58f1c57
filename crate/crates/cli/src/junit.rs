//! Minimal JUnit-style XML writer for the verify stage.

use dlrom_core::verify::Check;
use std::collections::BTreeMap;

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn junit_xml(checks: &[Check], config_hash: &str, seed: u64) -> String {
    let mut suites: BTreeMap<&str, Vec<&Check>> = BTreeMap::new();
    for check in checks {
        suites.entry(check.suite).or_default().push(check);
    }
    let total = checks.len();
    let failures = checks.iter().filter(|c| !c.passed).count();
    let mut xml = String::new();
    xml.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    xml.push_str(&format!(
        "<testsuites name=\"dlrom-verify\" tests=\"{total}\" failures=\"{failures}\" \
         config-hash=\"{}\" seed=\"{seed}\">\n",
        escape(config_hash)
    ));
    for (suite, list) in &suites {
        let suite_failures = list.iter().filter(|c| !c.passed).count();
        xml.push_str(&format!(
            "  <testsuite name=\"{}\" tests=\"{}\" failures=\"{}\">\n",
            escape(suite),
            list.len(),
            suite_failures
        ));
        for check in list {
            if check.passed {
                xml.push_str(&format!(
                    "    <testcase classname=\"{}\" name=\"{}\"/>\n",
                    escape(check.suite),
                    escape(check.name)
                ));
            } else {
                xml.push_str(&format!(
                    "    <testcase classname=\"{}\" name=\"{}\">\n      <failure message=\"{}\"/>\n    </testcase>\n",
                    escape(check.suite),
                    escape(check.name),
                    escape(&check.detail)
                ));
            }
        }
        xml.push_str("  </testsuite>\n");
    }
    xml.push_str("</testsuites>\n");
    xml
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xml_counts_and_escapes() {
        let checks = vec![
            Check {
                suite: "alpha",
                name: "ok_check",
                passed: true,
                detail: String::new(),
            },
            Check {
                suite: "alpha",
                name: "bad_check",
                passed: false,
                detail: "x < 1 & y > 2".into(),
            },
        ];
        let xml = junit_xml(&checks, "deadbeef", 42);
        assert!(xml.contains("tests=\"2\" failures=\"1\""));
        assert!(xml.contains("config-hash=\"deadbeef\" seed=\"42\""));
        assert!(xml.contains("x &lt; 1 &amp; y &gt; 2"));
        assert!(xml.contains("<testcase classname=\"alpha\" name=\"ok_check\"/>"));
    }
}
