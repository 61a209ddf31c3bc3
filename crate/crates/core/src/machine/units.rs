//! Suffixed quantities such as `2.7 GHz`, `32.00 kB` or `17.4 GB/s`.

/// Parse `text` as a number followed by an optional SI or binary prefix and
/// the unit `base`. Decimal prefixes are powers of 1000, `Ki`/`Mi`/`Gi` are
/// powers of 1024.
pub fn parse_quantity(text: &str, base: &str) -> Result<f64, String> {
    let text = text.trim();
    let split = text
        .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
        .unwrap_or(text.len());
    let (num, unit) = text.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("`{text}` does not start with a number"))?;
    let unit = unit.trim();
    if unit.is_empty() {
        return Ok(value);
    }
    let Some(prefix) = unit.strip_suffix(base) else {
        return Err(format!("`{text}`: expected a value in {base}"));
    };
    let factor = match prefix {
        "" => 1.0,
        "k" | "K" => 1e3,
        "M" => 1e6,
        "G" => 1e9,
        "T" => 1e12,
        "Ki" => 1024.0,
        "Mi" => 1024.0 * 1024.0,
        "Gi" => 1024.0 * 1024.0 * 1024.0,
        other => return Err(format!("`{text}`: unknown unit prefix `{other}`")),
    };
    Ok(value * factor)
}

/// Render a quantity so that [`parse_quantity`] recovers the exact value.
pub fn format_quantity(value: f64, base: &str) -> String {
    format!("{value} {base}")
}
