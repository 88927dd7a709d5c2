//! BVH (Biovision hierarchy) reader and writer.
//!
//! Rotation channels are Euler angles in degrees applied in the declared
//! order, `q = q_first * q_second * q_third`. The root may carry position
//! channels, which become the motion's global translation; other joints may
//! only carry rotations. The writer always emits `Zrotation Xrotation
//! Yrotation` for rotations and six-decimal fixed-point numbers.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::math::{Quat, Vec3};
use crate::skeleton::{Joint, Motion, Skeleton};

const FORMAT: &str = "bvh";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Channel {
    Position(usize),
    Rotation(usize),
}

fn parse_channel(name: &str) -> Option<Channel> {
    let axis = match name.as_bytes().first()? {
        b'X' | b'x' => 0,
        b'Y' | b'y' => 1,
        b'Z' | b'z' => 2,
        _ => return None,
    };
    match &name[1..] {
        "position" | "Position" => Some(Channel::Position(axis)),
        "rotation" | "Rotation" => Some(Channel::Rotation(axis)),
        _ => None,
    }
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let items: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)))
            .collect();
        let last_line = text.lines().count().max(1);
        Tokens {
            items,
            pos: 0,
            last_line,
        }
    }

    fn line(&self) -> usize {
        self.items.get(self.pos).map_or(self.last_line, |t| t.0)
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let t = self.items.get(self.pos).copied().ok_or_else(|| {
            Error::parse(
                FORMAT,
                self.last_line,
                format!("unexpected end of file, expected {what}"),
            )
        })?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, word: &str) -> Result<usize> {
        let (line, t) = self.next(&format!("`{word}`"))?;
        if t != word {
            return Err(Error::parse(FORMAT, line, format!("expected `{word}`, found `{t}`")));
        }
        Ok(line)
    }

    fn number(&mut self, what: &str) -> Result<f64> {
        let (line, t) = self.next(what)?;
        parse_number(t, line, what)
    }
}

fn parse_number(t: &str, line: usize, what: &str) -> Result<f64> {
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::parse(
            FORMAT,
            line,
            format!("expected a finite number for {what}, found `{t}`"),
        )),
    }
}

struct RawJoint {
    joint: Joint,
    channels: Vec<Channel>,
    has_offset: bool,
}

fn parse_offset(tok: &mut Tokens) -> Result<Vec3> {
    Ok(Vec3::new(
        tok.number("offset x")?,
        tok.number("offset y")?,
        tok.number("offset z")?,
    ))
}

fn parse_hierarchy(tok: &mut Tokens) -> Result<Vec<RawJoint>> {
    tok.expect("HIERARCHY")?;
    let mut joints: Vec<RawJoint> = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    loop {
        let (line, t) = tok.next("a hierarchy keyword")?;
        match t {
            "ROOT" | "JOINT" => {
                if (t == "ROOT") != joints.is_empty() {
                    return Err(Error::parse(FORMAT, line, format!("unexpected `{t}`")));
                }
                let parent = stack.last().copied();
                if t == "JOINT" && parent.is_none() {
                    return Err(Error::parse(FORMAT, line, "JOINT outside any open joint"));
                }
                let (_, name) = tok.next("a joint name")?;
                if name == "{" {
                    return Err(Error::parse(FORMAT, line, "missing joint name"));
                }
                tok.expect("{")?;
                joints.push(RawJoint {
                    joint: Joint::new(name, parent, Vec3::ZERO),
                    channels: Vec::new(),
                    has_offset: false,
                });
                stack.push(joints.len() - 1);
            }
            "End" => {
                tok.expect("Site")?;
                tok.expect("{")?;
                tok.expect("OFFSET")?;
                let off = parse_offset(tok)?;
                tok.expect("}")?;
                let Some(&top) = stack.last() else {
                    return Err(Error::parse(FORMAT, line, "End Site outside any joint"));
                };
                joints[top].joint.end_site = Some(off);
            }
            "OFFSET" => {
                let Some(&top) = stack.last() else {
                    return Err(Error::parse(FORMAT, line, "OFFSET outside any joint"));
                };
                if joints[top].has_offset {
                    return Err(Error::parse(FORMAT, line, "duplicate OFFSET"));
                }
                joints[top].joint.offset = parse_offset(tok)?;
                joints[top].has_offset = true;
            }
            "CHANNELS" => {
                let Some(&top) = stack.last() else {
                    return Err(Error::parse(FORMAT, line, "CHANNELS outside any joint"));
                };
                let (nl, n) = tok.next("a channel count")?;
                let n: usize = n
                    .parse()
                    .map_err(|_| Error::parse(FORMAT, nl, format!("invalid channel count `{n}`")))?;
                if n > 6 {
                    return Err(Error::parse(
                        FORMAT,
                        nl,
                        format!("{n} channels; at most 6 are supported"),
                    ));
                }
                let mut channels = Vec::with_capacity(n);
                for _ in 0..n {
                    let (cl, c) = tok.next("a channel name")?;
                    let ch =
                        parse_channel(c).ok_or_else(|| Error::parse(FORMAT, cl, format!("unknown channel `{c}`")))?;
                    if channels.contains(&ch) {
                        return Err(Error::parse(FORMAT, cl, format!("duplicate channel `{c}`")));
                    }
                    channels.push(ch);
                }
                let rot = channels.iter().filter(|c| matches!(c, Channel::Rotation(_))).count();
                if rot != 0 && rot != 3 {
                    return Err(Error::parse(
                        FORMAT,
                        line,
                        "unknown channel order: need 0 or 3 rotation channels",
                    ));
                }
                if top != 0 && channels.iter().any(|c| matches!(c, Channel::Position(_))) {
                    return Err(Error::parse(
                        FORMAT,
                        line,
                        "position channels are only supported on the root",
                    ));
                }
                if !joints[top].channels.is_empty() {
                    return Err(Error::parse(FORMAT, line, "duplicate CHANNELS"));
                }
                joints[top].channels = channels;
            }
            "}" => {
                if stack.pop().is_none() {
                    return Err(Error::parse(FORMAT, line, "unbalanced `}`"));
                }
                if stack.is_empty() {
                    return Ok(joints);
                }
            }
            other => return Err(Error::parse(FORMAT, line, format!("unexpected `{other}` in hierarchy"))),
        }
    }
}

/// Quaternion for Euler angles (degrees) applied in `axes` order.
pub fn euler_to_quat(axes: &[usize; 3], degrees: &[f64; 3]) -> Quat {
    let unit = [Vec3::X, Vec3::Y, Vec3::Z];
    let q = (0..3).fold(Quat::IDENTITY, |acc, i| {
        acc.hamilton(Quat::from_axis_angle(unit[axes[i]], degrees[i].to_radians()))
    });
    q.scale(1.0 / q.norm()).canonical()
}

/// Z, X, Y Euler angles in degrees with `q = qz * qx * qy`.
pub fn quat_to_zxy(q: Quat) -> [f64; 3] {
    let m = q.to_matrix();
    let sb = m[2][1].clamp(-1.0, 1.0);
    let b = sb.asin();
    let (a, c) = if b.cos().abs() > 1e-9 {
        ((-m[0][1]).atan2(m[1][1]), (-m[2][0]).atan2(m[2][2]))
    } else {
        (m[1][0].atan2(m[0][0]), 0.0)
    };
    [a.to_degrees(), b.to_degrees(), c.to_degrees()]
}

/// Parse a BVH document into a skeleton and motion.
pub fn parse_bvh(text: &str) -> Result<(Skeleton, Motion)> {
    let mut tok = Tokens::new(text);
    let raw = parse_hierarchy(&mut tok)?;
    let hierarchy_end = tok.line();
    tok.expect("MOTION")?;
    tok.expect("Frames:")?;
    let (fl, frames) = tok.next("a frame count")?;
    let frames: usize = frames
        .parse()
        .map_err(|_| Error::parse(FORMAT, fl, format!("invalid frame count `{frames}`")))?;
    tok.expect("Frame")?;
    tok.expect("Time:")?;
    let (tl, dt) = tok.next("a frame time")?;
    let dt = parse_number(dt, tl, "frame time")?;
    if !(dt > 0.0) {
        return Err(Error::parse(FORMAT, tl, format!("frame time {dt} must be positive")));
    }

    let joint_count = raw.len();
    let channel_count: usize = raw.iter().map(|j| j.channels.len()).sum();
    let mut rows: Vec<(usize, Vec<&str>)> = Vec::new();
    for &(line, t) in &tok.items[tok.pos..] {
        if line == tl {
            return Err(Error::parse(FORMAT, line, "unexpected data after frame time"));
        }
        match rows.last_mut() {
            Some((l, row)) if *l == line => row.push(t),
            _ => rows.push((line, vec![t])),
        }
    }
    if rows.len() != frames {
        let line = rows.last().map_or(tl, |r| r.0);
        return Err(Error::parse(
            FORMAT,
            line,
            format!("declared {frames} frames, found {}", rows.len()),
        ));
    }

    let skeleton = Skeleton::new(raw.iter().map(|r| r.joint.clone()).collect())
        .map_err(|e| Error::parse(FORMAT, hierarchy_end, e.to_string()))?;
    let mut rotations = Vec::with_capacity(frames.saturating_mul(joint_count).min(1 << 24));
    let mut global = Vec::with_capacity(frames.min(1 << 20));
    for (line, row) in &rows {
        if row.len() != channel_count {
            return Err(Error::parse(
                FORMAT,
                *line,
                format!("expected {channel_count} channel values, found {}", row.len()),
            ));
        }
        let mut values = row.iter();
        let mut translation = skeleton.offset(0);
        for r in &raw {
            let mut axes = [0usize; 3];
            let mut angles = [0.0; 3];
            let mut n_rot = 0;
            for ch in &r.channels {
                let v = parse_number(values.next().unwrap(), *line, "channel value")?;
                match *ch {
                    Channel::Position(a) => match a {
                        0 => translation.x = v,
                        1 => translation.y = v,
                        _ => translation.z = v,
                    },
                    Channel::Rotation(a) => {
                        axes[n_rot] = a;
                        angles[n_rot] = v;
                        n_rot += 1;
                    }
                }
            }
            rotations.push(if n_rot == 3 {
                euler_to_quat(&axes, &angles)
            } else {
                Quat::IDENTITY
            });
        }
        global.push([translation.x, translation.y, translation.z, 0.0]);
    }
    let motion =
        Motion::new(joint_count, rotations, global, 1.0 / dt).map_err(|e| Error::parse(FORMAT, tl, e.to_string()))?;
    Ok((skeleton, motion))
}

fn fmt_vec(v: Vec3) -> String {
    format!("{:.6} {:.6} {:.6}", v.x, v.y, v.z)
}

/// Depth-first joint order starting at the root.
fn dfs_order(skeleton: &Skeleton) -> Vec<usize> {
    let mut order = Vec::with_capacity(skeleton.len());
    let mut stack = vec![0];
    while let Some(k) = stack.pop() {
        order.push(k);
        let mut kids: Vec<usize> = skeleton.children(k).collect();
        kids.reverse();
        stack.extend(kids);
    }
    order
}

/// Serialize to BVH text. Joints are written depth-first; for skeletons
/// stored in that order (every parsed skeleton is) indices are preserved.
/// The reserved global channel is not stored.
pub fn write_bvh(skeleton: &Skeleton, motion: &Motion) -> Result<String> {
    if motion.joint_count() != skeleton.len() {
        return Err(Error::Shape(format!(
            "motion has {} joints, skeleton {}",
            motion.joint_count(),
            skeleton.len()
        )));
    }
    if motion.frames() == 0 {
        return Err(Error::Motion("cannot write a motion with no frames".into()));
    }
    let order = dfs_order(skeleton);
    let mut depth = vec![0usize; skeleton.len()];
    let mut s = String::from("HIERARCHY\n");
    for (i, &k) in order.iter().enumerate() {
        let joint = skeleton.joint(k);
        let d = joint.parent.map_or(0, |p| depth[p] + 1);
        depth[k] = d;
        let pad = "\t".repeat(d);
        let kw = if joint.parent.is_none() { "ROOT" } else { "JOINT" };
        let _ = writeln!(s, "{pad}{kw} {}\n{pad}{{", joint.name);
        let _ = writeln!(s, "{pad}\tOFFSET {}", fmt_vec(joint.offset));
        if joint.parent.is_none() {
            let _ = writeln!(
                s,
                "{pad}\tCHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation"
            );
        } else {
            let _ = writeln!(s, "{pad}\tCHANNELS 3 Zrotation Xrotation Yrotation");
        }
        if let Some(end) = joint.end_site {
            let _ = writeln!(
                s,
                "{pad}\tEnd Site\n{pad}\t{{\n{pad}\t\tOFFSET {}\n{pad}\t}}",
                fmt_vec(end)
            );
        }
        // Close this joint and any ancestors that the next joint leaves.
        let next_depth = order
            .get(i + 1)
            .map_or(0, |&n| skeleton.parent(n).map_or(0, |p| depth[p] + 1));
        for closing in (next_depth..=d).rev() {
            let _ = writeln!(s, "{}}}", "\t".repeat(closing));
        }
    }
    let _ = writeln!(
        s,
        "MOTION\nFrames: {}\nFrame Time: {:.6}",
        motion.frames(),
        1.0 / motion.frame_rate
    );
    for t in 0..motion.frames() {
        let mut row = fmt_vec(motion.translation(t));
        for &k in &order {
            let [z, x, y] = quat_to_zxy(motion.rotation(t, k));
            let _ = write!(row, " {z:.6} {x:.6} {y:.6}");
        }
        s.push_str(&row);
        s.push('\n');
    }
    Ok(s)
}
