import init, { bound_checks, label_curves, energy_demo } from "./pkg/musbo_web.js";

const NS = "http://www.w3.org/2000/svg";
const num = (id) => Number(document.getElementById(id).value);

function el(name, attrs) {
  const e = document.createElementNS(NS, name);
  for (const [k, v] of Object.entries(attrs)) e.setAttribute(k, v);
  return e;
}

function clear(svg) {
  while (svg.firstChild) svg.removeChild(svg.firstChild);
}

// Linear map from [lo, hi] to [a, b]; degenerate ranges map to the middle.
function scale(lo, hi, a, b) {
  return (x) => (hi > lo ? a + ((x - lo) / (hi - lo)) * (b - a) : (a + b) / 2);
}

function show(id, fn) {
  const out = document.getElementById(id);
  try {
    fn(out);
  } catch (err) {
    out.textContent = "error: " + err;
  }
}

function runBounds() {
  show("b-out", (out) => {
    const res = JSON.parse(bound_checks(num("b-draws"), num("b-states"), num("b-gamma"), num("b-seed")));
    const pts = res.points.filter((p) => p.applicable);
    out.textContent = `kappa = ${res.kappa.toFixed(3)}, checks = ${pts.length}, violations = ${res.violations}`;
    const svg = document.getElementById("b-plot");
    clear(svg);
    const hi = Math.max(1e-9, ...pts.map((p) => Math.max(p.lhs, p.rhs)));
    const lo = Math.min(0, ...pts.map((p) => Math.min(p.lhs, p.rhs)));
    const sx = scale(lo, hi, 40, 400);
    const sy = scale(lo, hi, 380, 20);
    svg.appendChild(el("line", { x1: sx(lo), y1: sy(lo), x2: sx(hi), y2: sy(hi), stroke: "#999" }));
    for (const p of pts) {
      svg.appendChild(el("circle", {
        cx: sx(p.rhs), cy: sy(p.lhs), r: 3,
        fill: p.check === "lemma1" ? "#1f77b4" : "#ff7f0e",
        stroke: p.holds ? "none" : "red",
      }));
    }
    const cap = el("text", { x: 45, y: 15, "font-size": 12 });
    cap.textContent = "lhs vs rhs (blue: lemma1, orange: prop1); points on or right of the diagonal hold";
    svg.appendChild(cap);
  });
}

function runLabels() {
  show("l-out", (out) => {
    const res = JSON.parse(label_curves(num("l-alpha"), num("l-vhat"), num("l-gamma"), num("l-max"), 101));
    const last = res.gap.length - 1;
    out.textContent = `label at max gap = ${res.label[last].toFixed(5)}, coefficient at max gap = ${res.coefficient[last].toFixed(5)}`;
    const svg = document.getElementById("l-plot");
    clear(svg);
    const ys = res.label.concat(res.coefficient);
    const sx = scale(0, res.gap[last], 40, 580);
    const sy = scale(Math.min(0, ...ys), 1, 280, 20);
    const line = (vals, color) => {
      const d = vals.map((v, i) => `${i ? "L" : "M"}${sx(res.gap[i])},${sy(v)}`).join(" ");
      svg.appendChild(el("path", { d, fill: "none", stroke: color, "stroke-width": 2 }));
    };
    svg.appendChild(el("line", { x1: 40, y1: sy(0), x2: 580, y2: sy(0), stroke: "#ccc" }));
    line(res.label, "#1f77b4");
    line(res.coefficient, "#2ca02c");
    const cap = el("text", { x: 45, y: 15, "font-size": 12 });
    cap.textContent = "blue: exp(-alpha * gap), green: 1 - kappa * gap / V_hat";
    svg.appendChild(cap);
  });
}

function runEnergy() {
  show("e-out", (out) => {
    const res = JSON.parse(energy_demo(num("e-n"), num("e-shift"), num("e-ratio"), num("e-seed")));
    out.textContent = `energy distance = ${res.energy_distance.toFixed(4)}`;
    const svg = document.getElementById("e-plot");
    clear(svg);
    const sx = scale(-6, 8, 10, 410);
    const sy = scale(-7, 7, 410, 10);
    for (const [pts, color] of [[res.a, "#1f77b4"], [res.b, "#d62728"]]) {
      for (const [x, y] of pts) {
        svg.appendChild(el("circle", { cx: sx(x), cy: sy(y), r: 2, fill: color, "fill-opacity": 0.6 }));
      }
    }
  });
}

await init();
document.getElementById("b-run").addEventListener("click", runBounds);
document.getElementById("l-run").addEventListener("click", runLabels);
for (const id of ["e-n", "e-shift", "e-ratio", "e-seed"]) {
  document.getElementById(id).addEventListener("input", runEnergy);
}
runBounds();
runLabels();
runEnergy();
