//! Body-text extraction from RFC 822 style messages.

use mailparse::{MailHeaderMap, ParsedMail};
use regex::Regex;
use std::sync::OnceLock;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Extracted {
    pub text: String,
    pub subject: Option<String>,
    /// Set when some bytes could not be decoded in the declared charset and
    /// were replaced.
    pub lossy: bool,
}

/// Extracts normalized body text from a raw message.
///
/// Headers are dropped. In multipart messages the first `text/plain` part
/// wins; otherwise the first `text/html` part is tag-stripped and
/// entity-decoded. Input without a header block is treated as plain text.
pub fn extract_text(raw: &[u8]) -> Result<Extracted> {
    if !looks_like_message(raw) {
        let decoded = String::from_utf8_lossy(raw);
        let lossy = matches!(decoded, std::borrow::Cow::Owned(_));
        let text = normalize_whitespace(&decoded);
        if text.is_empty() {
            return Err(Error::Extract("empty message".into()));
        }
        return Ok(Extracted {
            text,
            subject: None,
            lossy,
        });
    }

    let mail = mailparse::parse_mail(raw).map_err(|e| Error::Extract(e.to_string()))?;
    let subject = mail
        .headers
        .get_first_value("Subject")
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());

    let (body, is_html) = match find_part(&mail, "text/plain") {
        Some(part) => (part.get_body(), false),
        None => match find_part(&mail, "text/html") {
            Some(part) => (part.get_body(), true),
            None => return Err(Error::Extract("no textual part found".into())),
        },
    };
    let body = body.map_err(|e| Error::Extract(e.to_string()))?;
    let lossy = body.contains('\u{FFFD}');
    let text = if is_html { strip_html(&body) } else { body };
    let text = normalize_whitespace(&text);
    if text.is_empty() {
        return Err(Error::Extract("empty body".into()));
    }
    Ok(Extracted {
        text,
        subject,
        lossy,
    })
}

fn looks_like_message(raw: &[u8]) -> bool {
    let head = String::from_utf8_lossy(&raw[..raw.len().min(1024)]);
    let Some(first) = head.lines().find(|l| !l.trim().is_empty()) else {
        return false;
    };
    if first.starts_with("From ") {
        return true;
    }
    match first.split_once(':') {
        Some((name, _)) => {
            !name.is_empty() && name.bytes().all(|b| b.is_ascii_graphic() && b != b':')
        }
        None => false,
    }
}

fn is_attachment(part: &ParsedMail<'_>) -> bool {
    part.get_content_disposition().disposition == mailparse::DispositionType::Attachment
}

fn find_part<'a>(mail: &'a ParsedMail<'a>, mimetype: &str) -> Option<&'a ParsedMail<'a>> {
    if mail.subparts.is_empty() {
        return (mail.ctype.mimetype.eq_ignore_ascii_case(mimetype) && !is_attachment(mail))
            .then_some(mail);
    }
    mail.subparts.iter().find_map(|p| find_part(p, mimetype))
}

fn html_patterns() -> &'static [(Regex, &'static str)] {
    static PATTERNS: OnceLock<Vec<(Regex, &'static str)>> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        vec![
            (
                Regex::new(r"(?is)<(script|style|head)\b.*?</(script|style|head)\s*>").unwrap(),
                "",
            ),
            (Regex::new(r"(?s)<!--.*?-->").unwrap(), ""),
            (
                Regex::new(r"(?i)<\s*(br|/p|/div|/tr|/li|/h[1-6]|/table)\b[^>]*>").unwrap(),
                "\n",
            ),
            (Regex::new(r"(?s)<[^>]*>").unwrap(), ""),
        ]
    })
}

/// Removes markup and decodes character references.
pub fn strip_html(html: &str) -> String {
    let mut out = html.to_string();
    for (re, rep) in html_patterns() {
        out = re.replace_all(&out, *rep).into_owned();
    }
    html_escape::decode_html_entities(&out).into_owned()
}

/// Collapses horizontal whitespace runs to one space, strips trailing
/// spaces, keeps line breaks, squeezes blank-line runs to a single blank
/// line, and trims leading/trailing blank lines.
pub fn normalize_whitespace(text: &str) -> String {
    let mut lines: Vec<String> = Vec::new();
    for line in text.replace("\r\n", "\n").replace('\r', "\n").split('\n') {
        let mut collapsed = String::with_capacity(line.len());
        let mut in_space = false;
        for ch in line.chars() {
            if ch.is_whitespace() {
                if !in_space {
                    collapsed.push(' ');
                    in_space = true;
                }
            } else {
                collapsed.push(ch);
                in_space = false;
            }
        }
        let collapsed = collapsed.trim_end().to_string();
        if collapsed.is_empty() && lines.last().is_some_and(|l| l.is_empty()) {
            continue;
        }
        lines.push(collapsed);
    }
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    let start = lines
        .iter()
        .position(|l| !l.is_empty())
        .unwrap_or(lines.len());
    lines[start..].join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_part_plain() {
        let e = extract_text(b"Subject: hi\n\nHello").unwrap();
        assert_eq!(e.text, "Hello");
        assert_eq!(e.subject.as_deref(), Some("hi"));
        assert!(!e.lossy);
    }

    #[test]
    fn multipart_prefers_plain() {
        let raw = b"Subject: t\r\nMIME-Version: 1.0\r\nContent-Type: multipart/alternative; boundary=\"XX\"\r\n\r\n--XX\r\nContent-Type: text/html\r\n\r\n<b>B</b>\r\n--XX\r\nContent-Type: text/plain\r\n\r\nA\r\n--XX--\r\n";
        assert_eq!(extract_text(raw).unwrap().text, "A");
    }

    #[test]
    fn html_only_entities_decoded() {
        let raw = b"Content-Type: text/html\n\n<p>Pay&nbsp;now</p>";
        assert_eq!(extract_text(raw).unwrap().text, "Pay now");
    }

    #[test]
    fn transfer_encodings_decoded() {
        let b64 =
            b"Content-Type: text/plain\nContent-Transfer-Encoding: base64\n\nSGVsbG8gd29ybGQ=\n";
        assert_eq!(extract_text(b64).unwrap().text, "Hello world");
        let qp = b"Content-Type: text/plain; charset=utf-8\nContent-Transfer-Encoding: quoted-printable\n\nCaf=C3=A9 =3D ok\n";
        assert_eq!(extract_text(qp).unwrap().text, "Caf\u{e9} = ok");
    }

    #[test]
    fn plain_text_without_headers() {
        let e = extract_text(b"just a note\n\n\n\nsecond   para  ").unwrap();
        assert_eq!(e.text, "just a note\n\nsecond para");
    }

    #[test]
    fn attachment_only_has_no_text() {
        let raw = b"Content-Type: multipart/mixed; boundary=Z\n\n--Z\nContent-Type: application/pdf\nContent-Disposition: attachment; filename=a.pdf\n\nAAAA\n--Z--\n";
        assert!(matches!(extract_text(raw), Err(Error::Extract(_))));
    }

    #[test]
    fn invalid_utf8_is_flagged_lossy() {
        let e = extract_text(b"hello \xff\xfe world").unwrap();
        assert!(e.lossy);
        assert!(e.text.starts_with("hello"));
    }

    #[test]
    fn whitespace_rules() {
        assert_eq!(
            normalize_whitespace("\n\n a\t\t b  \n\n\n\nc  \n\n"),
            " a b\n\nc"
        );
    }
}
