//! Unified-diff subset used by the patching tool.
//!
//! A patch targets a single file and consists of `@@ -l,n +l,m @@` hunks
//! whose body lines start with ` ` (context), `-` (remove), or `+` (add).
//! Context and removed lines must match the target exactly — there is no
//! fuzz — so applying is deterministic and applying the same patch twice
//! fails the second time.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PatchError {
    #[error("malformed diff")]
    Malformed,
    #[error("patch does not apply")]
    DoesNotApply,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HunkLine {
    Context(String),
    Remove(String),
    Add(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hunk {
    /// 1-based first line of the old range; with `old_len == 0` the hunk
    /// inserts after this line (0 inserts at the top).
    pub old_start: usize,
    pub old_len: usize,
    pub new_start: usize,
    pub new_len: usize,
    pub lines: Vec<HunkLine>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    pub hunks: Vec<Hunk>,
}

fn parse_header(line: &str) -> Option<(usize, usize, usize, usize)> {
    let rest = line.strip_prefix("@@ -")?;
    let (ranges, tail) = rest.split_once(" @@")?;
    if !tail.is_empty() {
        return None;
    }
    let (old, new) = ranges.split_once(" +")?;
    let (old_start, old_len) = old.split_once(',')?;
    let (new_start, new_len) = new.split_once(',')?;
    Some((
        old_start.parse().ok()?,
        old_len.parse().ok()?,
        new_start.parse().ok()?,
        new_len.parse().ok()?,
    ))
}

/// Parse a diff. `---`/`+++` file-header lines before the first hunk are
/// tolerated and ignored; the empty string is malformed.
pub fn parse_patch(diff: &str) -> Result<Patch, PatchError> {
    let mut hunks: Vec<Hunk> = Vec::new();
    let mut lines = diff.lines().peekable();

    while matches!(lines.peek(), Some(l) if l.starts_with("--- ") || l.starts_with("+++ ")) {
        lines.next();
    }

    while let Some(line) = lines.next() {
        let Some((old_start, old_len, new_start, new_len)) = parse_header(line) else {
            return Err(PatchError::Malformed);
        };
        if old_start == 0 && old_len != 0 {
            // `-0,n` with n > 0 has no line zero to match.
            return Err(PatchError::Malformed);
        }
        let mut body = Vec::new();
        let mut seen_old = 0usize;
        let mut seen_new = 0usize;
        while seen_old < old_len || seen_new < new_len {
            let Some(raw) = lines.next() else {
                return Err(PatchError::Malformed);
            };
            let (marker, text) = match raw.chars().next() {
                Some(m @ (' ' | '-' | '+')) => (m, raw[1..].to_string()),
                _ => return Err(PatchError::Malformed),
            };
            match marker {
                ' ' => {
                    seen_old += 1;
                    seen_new += 1;
                    body.push(HunkLine::Context(text));
                }
                '-' => {
                    seen_old += 1;
                    body.push(HunkLine::Remove(text));
                }
                _ => {
                    seen_new += 1;
                    body.push(HunkLine::Add(text));
                }
            }
            if seen_old > old_len || seen_new > new_len {
                return Err(PatchError::Malformed);
            }
        }
        if let Some(prev) = hunks.last() {
            if old_start < prev.old_start + prev.old_len.max(1) {
                return Err(PatchError::Malformed);
            }
        }
        hunks.push(Hunk {
            old_start,
            old_len,
            new_start,
            new_len,
            lines: body,
        });
    }

    if hunks.is_empty() {
        return Err(PatchError::Malformed);
    }
    Ok(Patch { hunks })
}

/// Apply a parsed patch to file content. Context and removed lines must
/// match exactly at the stated positions.
pub fn apply_patch(content: &str, patch: &Patch) -> Result<String, PatchError> {
    let had_trailing_newline = content.is_empty() || content.ends_with('\n');
    let old_lines: Vec<&str> = content.lines().collect();
    let mut out: Vec<String> = Vec::new();
    let mut cursor = 0usize; // index into old_lines

    for hunk in &patch.hunks {
        // With old_len == 0 the hunk inserts after line old_start, so the
        // match region starts one line later.
        let region_start = if hunk.old_len == 0 {
            hunk.old_start
        } else {
            hunk.old_start - 1
        };
        if region_start < cursor || region_start > old_lines.len() {
            return Err(PatchError::DoesNotApply);
        }
        out.extend(old_lines[cursor..region_start].iter().map(|l| l.to_string()));
        cursor = region_start;
        for line in &hunk.lines {
            match line {
                HunkLine::Context(text) => {
                    if old_lines.get(cursor) != Some(&text.as_str()) {
                        return Err(PatchError::DoesNotApply);
                    }
                    out.push(text.clone());
                    cursor += 1;
                }
                HunkLine::Remove(text) => {
                    if old_lines.get(cursor) != Some(&text.as_str()) {
                        return Err(PatchError::DoesNotApply);
                    }
                    cursor += 1;
                }
                HunkLine::Add(text) => out.push(text.clone()),
            }
        }
    }
    out.extend(old_lines[cursor..].iter().map(|l| l.to_string()));

    let mut result = out.join("\n");
    if had_trailing_newline && !out.is_empty() {
        result.push('\n');
    }
    Ok(result)
}

/// Parse and apply in one step.
pub fn apply_diff(content: &str, diff: &str) -> Result<String, PatchError> {
    let patch = parse_patch(diff)?;
    apply_patch(content, &patch)
}

/// Render a one-hunk diff replacing line `line_no` (1-based) with
/// `replacement`, with up to `context` lines on each side.
pub fn single_line_diff(content: &str, line_no: usize, replacement: &str, context: usize) -> String {
    let lines: Vec<&str> = content.lines().collect();
    assert!(line_no >= 1 && line_no <= lines.len(), "line out of range");
    let idx = line_no - 1;
    let before = idx.saturating_sub(context);
    let after = (idx + 1 + context).min(lines.len());
    let old_len = after - before;
    let mut diff = format!(
        "@@ -{},{} +{},{} @@\n",
        before + 1,
        old_len,
        before + 1,
        old_len
    );
    for (i, line) in lines[before..after].iter().enumerate() {
        if before + i == idx {
            diff.push_str(&format!("-{line}\n"));
            diff.push_str(&format!("+{replacement}\n"));
        } else {
            diff.push_str(&format!(" {line}\n"));
        }
    }
    diff
}
