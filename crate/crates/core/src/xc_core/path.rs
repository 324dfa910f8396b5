use std::fmt;

/// One step of an alignment path.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Token {
    /// A call site: construct tag plus its occurrence index within the enclosing scope.
    Site { tag: String, occurrence: u32 },
    /// The branch taken by a conditional.
    Branch(bool),
    /// An aggregate-process key namespace.
    Key(String),
}

impl Token {
    pub fn site(tag: &str, occurrence: u32) -> Self {
        Token::Site {
            tag: tag.to_owned(),
            occurrence,
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Site { tag, occurrence: 0 } => write!(f, "{tag}"),
            Token::Site { tag, occurrence } => write!(f, "{tag}#{occurrence}"),
            Token::Branch(b) => write!(f, "?{b}"),
            Token::Key(k) => write!(f, "<{k}>"),
        }
    }
}

/// Sequence of call-site tokens identifying a sub-expression. Two devices
/// exchange data for a sub-expression iff their paths are equal.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AlignmentPath(Vec<Token>);

impl AlignmentPath {
    pub fn root() -> Self {
        AlignmentPath(Vec::new())
    }

    pub fn from_tokens(tokens: Vec<Token>) -> Self {
        AlignmentPath(tokens)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn child(&self, token: Token) -> Self {
        let mut tokens = self.0.clone();
        tokens.push(token);
        AlignmentPath(tokens)
    }

    /// Remaining tokens after `prefix`, if this path starts with it.
    pub fn strip_prefix(&self, prefix: &AlignmentPath) -> Option<&[Token]> {
        self.0.strip_prefix(prefix.0.as_slice())
    }
}

impl fmt::Display for AlignmentPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "/")?;
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "/")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}
