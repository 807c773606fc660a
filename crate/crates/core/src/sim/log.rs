//! Queries over `tick|node|EVENT|detail` log lines.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord<'a> {
    pub tick: u64,
    pub node: &'a str,
    pub event: &'a str,
    pub detail: &'a str,
}

pub fn parse_record(line: &str) -> Option<LogRecord<'_>> {
    let mut parts = line.splitn(4, '|');
    let tick = parts.next()?.parse().ok()?;
    Some(LogRecord {
        tick,
        node: parts.next()?,
        event: parts.next()?,
        detail: parts.next().unwrap_or(""),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LogFilter {
    pub node: Option<String>,
    pub event: Option<String>,
    pub from: Option<u64>,
    pub to: Option<u64>,
}

impl LogFilter {
    pub fn matches(&self, r: &LogRecord) -> bool {
        self.node.as_deref().is_none_or(|n| n == r.node)
            && self
                .event
                .as_deref()
                .is_none_or(|e| e.eq_ignore_ascii_case(r.event))
            && self.from.is_none_or(|f| r.tick >= f)
            && self.to.is_none_or(|t| r.tick <= t)
    }
}

/// Lines of `text` matching `filter`, in order. Unparseable lines are skipped.
pub fn query_log<'a>(text: &'a str, filter: &LogFilter) -> Vec<&'a str> {
    text.lines()
        .filter(|l| parse_record(l).is_some_and(|r| filter.matches(&r)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const LOG: &str =
        "0|rsms|SETUP|x\n3|d1|JOIN_START|net=a\n5|d1|JOIN_COMPLETE|net=a\n7|d2|TRAFFIC|ok";

    #[test]
    fn filters_combine() {
        let f = LogFilter {
            node: Some("d1".into()),
            from: Some(4),
            ..Default::default()
        };
        assert_eq!(query_log(LOG, &f), vec!["5|d1|JOIN_COMPLETE|net=a"]);
        let f = LogFilter {
            event: Some("traffic".into()),
            ..Default::default()
        };
        assert_eq!(query_log(LOG, &f).len(), 1);
        assert_eq!(query_log(LOG, &LogFilter::default()).len(), 4);
    }

    #[test]
    fn detail_may_contain_pipes() {
        let r = parse_record("1|n|E|a|b").unwrap();
        assert_eq!(r.detail, "a|b");
        assert!(parse_record("x|n|E|").is_none());
    }
}
