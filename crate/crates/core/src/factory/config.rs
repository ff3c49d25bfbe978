//! Line-oriented domain configuration files.
//!
//! ```text
//! [grid]
//! width=6
//! height=4
//! horizon=10
//! move_success=0.9
//! act_success=1.0
//! discount=1.0
//! [robots]      # id,row,col
//! 1,0,0
//! [tasks]       # row,col,count
//! 1,2,2
//! [spawns]      # events=<per step>,<probability> then row,col lines
//! events=0,0.0
//! ```

use super::{Cell, DomainSpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { line, message: message.into() })
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    Grid,
    Robots,
    Tasks,
    Spawns,
    Experiment,
}

impl Section {
    fn name(self) -> &'static str {
        match self {
            Section::Grid => "grid",
            Section::Robots => "robots",
            Section::Tasks => "tasks",
            Section::Spawns => "spawns",
            Section::Experiment => "experiment",
        }
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, what: &str, raw: &str) -> Result<T, ParseError> {
    raw.trim()
        .parse::<T>()
        .or_else(|_| err(line, format!("invalid {what} '{}'", raw.trim())))
}

fn parse_probability(line: usize, what: &str, raw: &str) -> Result<f64, ParseError> {
    let p: f64 = parse_num(line, what, raw)?;
    if !(0.0..=1.0).contains(&p) {
        return err(line, format!("{what}={p} outside [0,1]"));
    }
    Ok(p)
}

fn fields(line: usize, body: &str, expected: usize, what: &str) -> Result<Vec<String>, ParseError> {
    let parts: Vec<String> = body.split(',').map(|s| s.trim().to_string()).collect();
    if parts.len() != expected {
        return err(line, format!("{what} line needs {expected} comma-separated fields, got {}", parts.len()));
    }
    Ok(parts)
}

pub fn parse_domain_config(text: &str) -> Result<DomainSpec, ParseError> {
    let mut seen: Vec<Section> = Vec::new();
    let mut section: Option<Section> = None;

    let mut width: Option<(usize, usize)> = None;
    let mut height: Option<(usize, usize)> = None;
    let mut horizon: Option<usize> = None;
    let mut move_success: Option<f64> = None;
    let mut act_success: Option<f64> = None;
    let mut discount = 1.0;

    let mut robots: Vec<(u32, usize, usize, usize)> = Vec::new();
    let mut tasks: Vec<(usize, usize, u32, usize)> = Vec::new();
    let mut spawn_cells: Vec<(usize, usize, usize)> = Vec::new();
    let mut events: Option<(usize, f64)> = None;

    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| ParseError { line, message: format!("malformed section header '{body}'") })?;
            let sec = match name.trim() {
                "grid" => Section::Grid,
                "robots" => Section::Robots,
                "tasks" => Section::Tasks,
                "spawns" => Section::Spawns,
                "experiment" => Section::Experiment,
                other => return err(line, format!("unknown section [{other}]")),
            };
            if seen.contains(&sec) {
                return err(line, format!("duplicate section [{}]", sec.name()));
            }
            seen.push(sec);
            section = Some(sec);
            continue;
        }
        match section {
            None => return err(line, "content before the first section header"),
            Some(Section::Experiment) => {}
            Some(Section::Grid) => {
                let (key, value) = body
                    .split_once('=')
                    .ok_or_else(|| ParseError { line, message: format!("expected key=value, got '{body}'") })?;
                match key.trim() {
                    "width" => width = Some((parse_num(line, "width", value)?, line)),
                    "height" => height = Some((parse_num(line, "height", value)?, line)),
                    "horizon" => horizon = Some(parse_num(line, "horizon", value)?),
                    "move_success" => move_success = Some(parse_probability(line, "move_success", value)?),
                    "act_success" => act_success = Some(parse_probability(line, "act_success", value)?),
                    "discount" => discount = parse_probability(line, "discount", value)?,
                    other => return err(line, format!("unknown [grid] key '{other}'")),
                }
            }
            Some(Section::Robots) => {
                let f = fields(line, body, 3, "robot")?;
                let id: u32 = parse_num(line, "robot id", &f[0])?;
                if id == 0 {
                    return err(line, "robot ids must be positive");
                }
                if robots.iter().any(|r| r.0 == id) {
                    return err(line, format!("duplicate robot id {id}"));
                }
                robots.push((id, parse_num(line, "row", &f[1])?, parse_num(line, "col", &f[2])?, line));
            }
            Some(Section::Tasks) => {
                let f = fields(line, body, 3, "task")?;
                tasks.push((
                    parse_num(line, "row", &f[0])?,
                    parse_num(line, "col", &f[1])?,
                    parse_num(line, "task count", &f[2])?,
                    line,
                ));
            }
            Some(Section::Spawns) => {
                if let Some(rest) = body.strip_prefix("events") {
                    let rest = rest
                        .trim_start()
                        .strip_prefix('=')
                        .ok_or_else(|| ParseError { line, message: "expected events=<count>,<probability>".into() })?;
                    if events.is_some() {
                        return err(line, "duplicate events line");
                    }
                    let f = fields(line, rest, 2, "events")?;
                    events = Some((parse_num(line, "spawn event count", &f[0])?, parse_probability(line, "spawn probability", &f[1])?));
                } else {
                    let f = fields(line, body, 2, "spawn cell")?;
                    spawn_cells.push((parse_num(line, "row", &f[0])?, parse_num(line, "col", &f[1])?, line));
                }
            }
        }
    }

    for sec in [Section::Grid, Section::Robots, Section::Tasks, Section::Spawns] {
        if !seen.contains(&sec) {
            return err(last_line, format!("missing section [{}]", sec.name()));
        }
    }
    let (width, _) = width.ok_or_else(|| ParseError { line: last_line, message: "missing [grid] key 'width'".into() })?;
    let (height, _) = height.ok_or_else(|| ParseError { line: last_line, message: "missing [grid] key 'height'".into() })?;
    let horizon = horizon.ok_or_else(|| ParseError { line: last_line, message: "missing [grid] key 'horizon'".into() })?;
    let move_success =
        move_success.ok_or_else(|| ParseError { line: last_line, message: "missing [grid] key 'move_success'".into() })?;
    let act_success =
        act_success.ok_or_else(|| ParseError { line: last_line, message: "missing [grid] key 'act_success'".into() })?;
    let (events, probability) =
        events.ok_or_else(|| ParseError { line: last_line, message: "missing events line in [spawns]".into() })?;

    if width == 0 || height == 0 || width > u16::MAX as usize || height > u16::MAX as usize {
        return err(last_line, format!("grid size {width}x{height} is not supported"));
    }
    if horizon == 0 || horizon > u16::MAX as usize {
        return err(last_line, "horizon must be between 1 and 65535");
    }
    if robots.is_empty() {
        return err(last_line, "[robots] must list at least one robot");
    }
    let check = |row: usize, col: usize, line: usize| -> Result<Cell, ParseError> {
        if row >= height || col >= width {
            return err(line, format!("cell ({row},{col}) outside the {width}x{height} grid"));
        }
        Ok(Cell::new(row as u16, col as u16))
    };

    robots.sort_by_key(|r| r.0);
    let mut robot_ids = Vec::with_capacity(robots.len());
    let mut robot_starts = Vec::with_capacity(robots.len());
    for &(id, row, col, line) in &robots {
        robot_ids.push(id);
        robot_starts.push(check(row, col, line)?);
    }
    let mut fixed_tasks = Vec::with_capacity(tasks.len());
    for &(row, col, count, line) in &tasks {
        fixed_tasks.push((check(row, col, line)?, count));
    }
    let mut cells = Vec::with_capacity(spawn_cells.len());
    for &(row, col, line) in &spawn_cells {
        cells.push(check(row, col, line)?);
    }
    if events > 0 && cells.is_empty() {
        return err(last_line, "spawn events configured but no spawn cells listed");
    }

    Ok(DomainSpec {
        width,
        height,
        horizon,
        move_success,
        act_success,
        discount,
        robot_ids,
        robot_starts,
        fixed_tasks,
        spawn_cells: cells,
        spawn_probability: probability,
        spawn_events_per_step: events,
    })
}

/// Raw `key=value` pairs of the optional `[experiment]` section, in file
/// order, with their line numbers. The domain parser ignores this section.
pub fn experiment_entries(text: &str) -> Result<Vec<(String, String, usize)>, ParseError> {
    let mut inside = false;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if body.starts_with('[') {
            inside = body == "[experiment]";
            continue;
        }
        if inside {
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| ParseError { line, message: format!("expected key=value, got '{body}'") })?;
            out.push((k.trim().to_string(), v.trim().to_string(), line));
        }
    }
    Ok(out)
}

/// Renders a spec back into the configuration format.
pub fn render_domain_config(spec: &DomainSpec) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "[grid]\nwidth={}\nheight={}\nhorizon={}\nmove_success={}\nact_success={}\ndiscount={}\n",
        spec.width, spec.height, spec.horizon, spec.move_success, spec.act_success, spec.discount
    ));
    out.push_str("[robots]\n");
    for (id, c) in spec.robot_ids.iter().zip(&spec.robot_starts) {
        out.push_str(&format!("{id},{},{}\n", c.row, c.col));
    }
    out.push_str("[tasks]\n");
    for (c, n) in &spec.fixed_tasks {
        out.push_str(&format!("{},{},{n}\n", c.row, c.col));
    }
    out.push_str(&format!("[spawns]\nevents={},{}\n", spec.spawn_events_per_step, spec.spawn_probability));
    for c in &spec.spawn_cells {
        out.push_str(&format!("{},{}\n", c.row, c.col));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "\
[grid]
width=7
height=7
horizon=10
move_success=0.9
act_success=1.0
discount=1.0
[robots]          # id,row,col
2,3,3
1,3,3
[tasks]
0,0,4
[spawns]          # none
events=0,0.0
";

    #[test]
    fn parses_and_orders_robots_by_id() {
        let spec = parse_domain_config(BASE).unwrap();
        assert_eq!(spec.width, 7);
        assert_eq!(spec.robot_ids, vec![1, 2]);
        assert_eq!(spec.total_fixed_tasks(), 4);
        assert!(!spec.has_spawns());
        spec.validate().unwrap();
    }

    #[test]
    fn out_of_bounds_task_names_line() {
        let text = BASE.replace("0,0,4", "9,9,1");
        let e = parse_domain_config(&text).unwrap_err();
        assert_eq!(e.line, 12);
        assert!(e.message.contains("outside"));
    }

    #[test]
    fn probability_range_checked() {
        let text = BASE.replace("move_success=0.9", "move_success=1.3");
        let e = parse_domain_config(&text).unwrap_err();
        assert_eq!(e.line, 5);
    }

    #[test]
    fn duplicate_robot_id() {
        let text = BASE.replace("2,3,3", "1,2,2");
        let e = parse_domain_config(&text).unwrap_err();
        assert_eq!(e.line, 10);
        assert!(e.message.contains("duplicate robot id"));
    }

    #[test]
    fn missing_section() {
        let text = BASE.replace("[tasks]\n0,0,4\n", "");
        let e = parse_domain_config(&text).unwrap_err();
        assert!(e.message.contains("missing section [tasks]"), "{e}");
    }

    #[test]
    fn spawn_events_without_cells() {
        let text = BASE.replace("events=0,0.0", "events=2,0.9");
        assert!(parse_domain_config(&text).is_err());
    }

    #[test]
    fn experiment_section_is_separate() {
        let text = format!("{BASE}[experiment]\nexploration=0.5\nepisodes=320\n");
        assert_eq!(parse_domain_config(&text).unwrap(), parse_domain_config(BASE).unwrap());
        let e = experiment_entries(&text).unwrap();
        assert_eq!(e[0], ("exploration".to_string(), "0.5".to_string(), 16));
        assert_eq!(e[1].1, "320");
        assert!(experiment_entries(BASE).unwrap().is_empty());
    }

    #[test]
    fn render_roundtrip() {
        let text = BASE.replace("events=0,0.0", "events=3,0.9\n1,1\n5,5");
        let spec = parse_domain_config(&text).unwrap();
        assert_eq!(parse_domain_config(&render_domain_config(&spec)).unwrap(), spec);
    }
}
