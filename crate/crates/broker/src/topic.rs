use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopicError {
    #[error("topic is empty")]
    Empty,
    #[error("topic of {0} bytes exceeds 65535")]
    TooLong(usize),
    #[error("topic contains U+0000")]
    Nul,
    #[error("wildcard in topic name {0:?}")]
    WildcardInName(String),
    #[error("invalid topic filter {0:?}")]
    InvalidFilter(String),
}

fn common(s: &str) -> Result<(), TopicError> {
    if s.is_empty() {
        return Err(TopicError::Empty);
    }
    if s.len() > u16::MAX as usize {
        return Err(TopicError::TooLong(s.len()));
    }
    if s.contains('\0') {
        return Err(TopicError::Nul);
    }
    Ok(())
}

/// Topic names are what publishers send: no wildcards allowed.
pub fn validate_topic_name(topic: &str) -> Result<(), TopicError> {
    common(topic)?;
    if topic.contains(['+', '#']) {
        return Err(TopicError::WildcardInName(topic.to_string()));
    }
    Ok(())
}

/// `+` must fill a whole level; `#` must fill the last level.
pub fn validate_filter(filter: &str) -> Result<(), TopicError> {
    common(filter)?;
    let levels: Vec<&str> = filter.split('/').collect();
    for (i, level) in levels.iter().enumerate() {
        let bad = match *level {
            "+" => false,
            "#" => i + 1 != levels.len(),
            l => l.contains(['+', '#']),
        };
        if bad {
            return Err(TopicError::InvalidFilter(filter.to_string()));
        }
    }
    Ok(())
}

/// Matches an already validated filter against an already validated topic name.
pub fn matches(filter: &str, topic: &str) -> bool {
    if topic.starts_with('$') && filter.starts_with(['+', '#']) {
        return false;
    }
    let mut f = filter.split('/');
    let mut t = topic.split('/');
    loop {
        match (f.next(), t.next()) {
            (Some("#"), _) => return true,
            (Some("+"), Some(_)) => {}
            (Some(a), Some(b)) if a == b => {}
            (None, None) => return true,
            _ => return false,
        }
    }
}

/// Validating form of [`matches`].
pub fn match_topic(filter: &str, topic: &str) -> Result<bool, TopicError> {
    validate_filter(filter)?;
    validate_topic_name(topic)?;
    Ok(matches(filter, topic))
}
