use super::PolicyError;

/// Anchored absolute-path glob. `*` matches within one path component, `**`
/// matches any number of components (including none), other characters match
/// literally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobPattern {
    raw: String,
    components: Vec<Component>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Component {
    /// Any number of whole components.
    Globstar,
    /// One component matched piecewise (literal runs separated by `*`).
    Pattern(Vec<Piece>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Literal(String),
    Star,
}

impl GlobPattern {
    pub fn parse(pattern: &str) -> Result<Self, PolicyError> {
        if !pattern.starts_with('/') {
            return Err(PolicyError::Schema {
                path: "path".to_string(),
                msg: format!("pattern {pattern:?} must be an anchored absolute path"),
            });
        }
        let mut components = Vec::new();
        for comp in pattern[1..].split('/') {
            if comp == "**" {
                components.push(Component::Globstar);
                continue;
            }
            if comp.contains("**") {
                return Err(PolicyError::Schema {
                    path: "path".to_string(),
                    msg: format!("`**` must stand alone as a path component in {pattern:?}"),
                });
            }
            let mut pieces = Vec::new();
            let mut lit = String::new();
            for ch in comp.chars() {
                if ch == '*' {
                    if !lit.is_empty() {
                        pieces.push(Piece::Literal(std::mem::take(&mut lit)));
                    }
                    pieces.push(Piece::Star);
                } else {
                    lit.push(ch);
                }
            }
            if !lit.is_empty() {
                pieces.push(Piece::Literal(lit));
            }
            components.push(Component::Pattern(pieces));
        }
        Ok(Self {
            raw: pattern.to_string(),
            components,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    /// Specificity for precedence: literal components rank over `*`, which
    /// ranks over `**`; longer patterns are more specific.
    pub fn specificity(&self) -> (usize, usize) {
        let literal = self
            .components
            .iter()
            .filter(|c| matches!(c, Component::Pattern(p) if !p.contains(&Piece::Star)))
            .count();
        let non_globstar = self
            .components
            .iter()
            .filter(|c| !matches!(c, Component::Globstar))
            .count();
        (literal, non_globstar)
    }

    pub fn matches(&self, path: &str) -> bool {
        if !path.starts_with('/') {
            return false;
        }
        let parts: Vec<&str> = if path == "/" {
            Vec::new()
        } else {
            path[1..].split('/').collect()
        };
        match_components(&self.components, &parts)
    }
}

fn match_components(pattern: &[Component], parts: &[&str]) -> bool {
    match pattern.first() {
        None => parts.is_empty(),
        Some(Component::Globstar) => {
            // try consuming 0..=n components
            for skip in 0..=parts.len() {
                if match_components(&pattern[1..], &parts[skip..]) {
                    return true;
                }
            }
            false
        }
        Some(Component::Pattern(pieces)) => match parts.first() {
            None => false,
            Some(part) => match_pieces(pieces, part) && match_components(&pattern[1..], &parts[1..]),
        },
    }
}

fn match_pieces(pieces: &[Piece], text: &str) -> bool {
    match pieces.first() {
        None => text.is_empty(),
        Some(Piece::Literal(lit)) => text
            .strip_prefix(lit.as_str())
            .map(|rest| match_pieces(&pieces[1..], rest))
            .unwrap_or(false),
        Some(Piece::Star) => (0..=text.len())
            .filter(|i| text.is_char_boundary(*i))
            .any(|i| match_pieces(&pieces[1..], &text[i..])),
    }
}
