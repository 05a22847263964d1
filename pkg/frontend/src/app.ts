/** Wires the page: session controls, marker clicks, plan chat, frame stream. */

import {
  ApiClient,
  ApiError,
  MarkerDoc,
  SessionDoc,
  SessionStream,
  SocketLike,
} from "./api.js";
import { drawScene, drawTerrain, Ctx2D } from "./renderer.js";
import { Viewport } from "./view.js";

const SCENARIOS = ["coordinate", "exploit_weakness", "markers_terrain", "strategize_points"];

interface Elements {
  apiBase: HTMLInputElement;
  scenario: HTMLSelectElement;
  seed: HTMLInputElement;
  pace: HTMLInputElement;
  newSession: HTMLButtonElement;
  run: HTMLButtonElement;
  prompt: HTMLTextAreaElement;
  send: HTMLButtonElement;
  log: HTMLElement;
  status: HTMLElement;
  mission: HTMLElement;
  canvas: HTMLCanvasElement;
}

function grab(root: Document): Elements {
  const byId = <T extends HTMLElement>(id: string) => root.getElementById(id) as T;
  return {
    apiBase: byId("api-base"),
    scenario: byId("scenario"),
    seed: byId("seed"),
    pace: byId("pace"),
    newSession: byId("new-session"),
    run: byId("run"),
    prompt: byId("prompt"),
    send: byId("send"),
    log: byId("log"),
    status: byId("status"),
    mission: byId("mission"),
    canvas: byId("battle"),
  };
}

export function mountApp(root: Document): void {
  const el = grab(root);
  for (const name of SCENARIOS) {
    const option = root.createElement("option");
    option.value = name;
    option.textContent = name;
    el.scenario.appendChild(option);
  }

  let client = new ApiClient(el.apiBase.value);
  let session: SessionDoc | null = null;
  let markers: MarkerDoc[] = [];
  let stream: SessionStream | null = null;
  let viewport: Viewport | null = null;
  const ctx = el.canvas.getContext("2d") as unknown as Ctx2D;

  const say = (line: string, cls = "") => {
    const p = root.createElement("p");
    p.textContent = line;
    if (cls) p.className = cls;
    el.log.appendChild(p);
    el.log.scrollTop = el.log.scrollHeight;
  };
  const setStatus = (text: string) => {
    el.status.textContent = text;
  };
  const oops = (err: unknown) =>
    say(err instanceof ApiError ? err.message : String(err), "error");

  const redraw = (units: Parameters<typeof drawScene>[2] = []) => {
    if (!session || !viewport) return;
    const scene = { map: session.map, markers, unit_types: session.unit_types };
    drawScene(ctx, scene, units, viewport);
  };

  el.newSession.onclick = async () => {
    try {
      stream?.close();
      client = new ApiClient(el.apiBase.value);
      session = await client.createSession(
        el.scenario.value,
        Number(el.seed.value) || 1,
        Number(el.pace.value) || undefined,
      );
      viewport = new Viewport(
        session.map.width,
        session.map.height,
        el.canvas.width,
        el.canvas.height,
      );
      markers = session.markers;
      el.log.textContent = "";
      el.mission.textContent = session.mission;
      setStatus(`session ${session.id} — ${session.title} (${session.phase})`);
      say(`New session on ${session.title}. Click the map to drop markers.`);
      redraw();
    } catch (err) {
      oops(err);
    }
  };

  el.canvas.onclick = async (event) => {
    if (!session || !viewport) return;
    const rect = el.canvas.getBoundingClientRect();
    const spot = viewport.worldClick(event.clientX - rect.left, event.clientY - rect.top);
    try {
      const reply = await client.addMarker(session.id, spot.x, spot.y);
      markers = reply.markers;
      const latest = reply.markers[reply.markers.length - 1];
      say(`Marker ${latest.label} at (${latest.x}, ${latest.y}).`);
      redraw();
    } catch (err) {
      oops(err);
    }
  };

  el.send.onclick = async () => {
    if (!session) return;
    const text = el.prompt.value.trim();
    if (!text) return;
    say(`You: ${text}`, "you");
    setStatus("thinking…");
    try {
      const reply = await client.sendPrompt(session.id, text);
      say(`Model: ${reply.assistant}`, "model");
      for (const diagnostic of reply.diagnostics) {
        say(diagnostic, "diag");
      }
      setStatus(
        reply.has_plan
          ? `plan ready (${reply.plan?.steps ?? 0} steps) — press Run`
          : "no valid plan yet — refine the prompt",
      );
    } catch (err) {
      setStatus("prompt failed");
      oops(err);
    }
  };

  el.run.onclick = async () => {
    if (!session || !viewport) return;
    try {
      const socket = new WebSocket(client.streamUrl(session.id)) as unknown as SocketLike;
      stream = new SessionStream(socket, {
        onFrame: (frame) => {
          setStatus(`running — tick ${frame.tick}, ${frame.units.length} units alive`);
          redraw(frame.units);
        },
        onOutcome: (outcome) => {
          setStatus(
            `${outcome.outcome.toUpperCase()} after ${outcome.ticks} ticks — ` +
              `${outcome.ally_survivors} allies vs ${outcome.enemy_survivors} enemies left`,
          );
          say(`Outcome: ${outcome.outcome}.`);
        },
      });
      const reply = await client.run(session.id);
      if (reply.outcome) {
        setStatus(`already finished: ${reply.outcome}`);
      }
    } catch (err) {
      oops(err);
    }
  };

  // A neutral backdrop before any session exists.
  const idle = new Viewport(4, 3, el.canvas.width, el.canvas.height);
  drawTerrain(ctx, { width: 4, height: 3, features: [] }, idle);
}
