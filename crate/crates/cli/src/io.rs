//! Line-oriented file helpers shared by the subcommands.

use std::fs;
use std::path::Path;

use anyhow::Context;

/// Reads a file and returns its non-empty lines.
pub fn read_lines(path: &Path) -> anyhow::Result<Vec<String>> {
    let content =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(content
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect())
}

/// Writes one line per entry, each terminated by a newline.
pub fn write_lines(path: &Path, lines: &[String]) -> anyhow::Result<()> {
    let mut content = lines.join("\n");
    if !content.is_empty() {
        content.push('\n');
    }
    fs::write(path, content).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

