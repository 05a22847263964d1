/** Typed client for the session server's HTTP and WebSocket interfaces. */

export interface UnitTypeInfo {
  glyph: string;
  speed: number;
  max_health: number;
  damage: number;
  attack_range: number;
  sight_range: number;
}

export interface ShapeDoc {
  rect?: [number, number, number, number];
  circle?: [number, number, number];
}

export interface FeatureDoc {
  name: string;
  kind: string;
  shapes: ShapeDoc[];
}

export interface MapDoc {
  width: number;
  height: number;
  features: FeatureDoc[];
}

export interface MarkerDoc {
  label: string;
  x: number;
  y: number;
}

export interface RosterEntry {
  type: string;
  count: number;
}

export interface SessionDoc {
  id: string;
  scenario: string;
  title: string;
  phase: string;
  map: MapDoc;
  markers: MarkerDoc[];
  mission: string;
  objective: { kind: string; point: [number, number] | null; radius: number };
  max_ticks: number;
  rosters: { ally: RosterEntry[]; enemy: RosterEntry[] };
  unit_types: Record<string, UnitTypeInfo>;
  preset_markers: MarkerDoc[];
}

export interface PlanDoc {
  steps: number;
  step_ids: number[];
  text: string;
}

export interface PromptReply {
  assistant: string;
  plan: PlanDoc | null;
  diagnostics: string[];
  phase: string;
  has_plan: boolean;
}

export interface FrameUnit {
  id: number;
  team: "ally" | "enemy";
  type: string;
  x: number;
  y: number;
  health: number;
}

export interface HelloMessage {
  type: "hello";
  session: string;
  phase: string;
}

export interface PhaseMessage {
  type: "phase";
  phase: string;
}

export interface FrameMessage {
  type: "frame";
  tick: number;
  units: FrameUnit[];
}

export interface OutcomeMessage {
  type: "outcome";
  outcome: string;
  ticks: number;
  ally_survivors: number;
  enemy_survivors: number;
}

export type StreamMessage = HelloMessage | PhaseMessage | FrameMessage | OutcomeMessage;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(`server replied ${status}: ${detail}`);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "content-type": "application/json" } };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchFn(this.baseUrl + path, init);
    if (!response.ok) {
      throw new ApiError(response.status, await response.text());
    }
    return (await response.json()) as T;
  }

  createSession(scenario: string, seed = 1, pace?: number): Promise<SessionDoc> {
    const body: Record<string, unknown> = { scenario, seed };
    if (pace !== undefined) {
      body.pace = pace;
    }
    return this.request<SessionDoc>("POST", "/sessions", body);
  }

  /** Marker coordinates are whole meters; the server rejects fractions. */
  addMarker(sessionId: string, x: number, y: number): Promise<{ markers: MarkerDoc[] }> {
    if (!Number.isInteger(x) || !Number.isInteger(y)) {
      throw new Error(`marker coordinates must be integers, got (${x}, ${y})`);
    }
    return this.request("POST", `/sessions/${sessionId}/markers`, { x, y });
  }

  sendPrompt(sessionId: string, text: string): Promise<PromptReply> {
    return this.request("POST", `/sessions/${sessionId}/prompt`, { text });
  }

  run(sessionId: string): Promise<{ phase: string; outcome?: string }> {
    return this.request("POST", `/sessions/${sessionId}/run`);
  }

  getReplay(sessionId: string): Promise<Record<string, unknown>> {
    return this.request("GET", `/sessions/${sessionId}/replay`);
  }

  streamUrl(sessionId: string): string {
    const ws = this.baseUrl.replace(/^http/, "ws");
    return `${ws}/sessions/${sessionId}/stream`;
  }
}

/** Minimal WebSocket shape so tests can inject a fake. */
export interface SocketLike {
  onmessage: ((event: { data: string }) => void) | null;
  onclose: (() => void) | null;
  onerror: ((event: unknown) => void) | null;
  close(): void;
}

export interface StreamHandlers {
  onHello?: (message: HelloMessage) => void;
  onPhase?: (message: PhaseMessage) => void;
  onFrame?: (message: FrameMessage) => void;
  onOutcome?: (message: OutcomeMessage) => void;
  onClose?: () => void;
}

/** Dispatches stream messages to typed handlers; closes after the outcome. */
export class SessionStream {
  constructor(
    private readonly socket: SocketLike,
    handlers: StreamHandlers,
  ) {
    socket.onmessage = (event) => {
      const message = JSON.parse(event.data) as StreamMessage;
      switch (message.type) {
        case "hello":
          handlers.onHello?.(message);
          break;
        case "phase":
          handlers.onPhase?.(message);
          break;
        case "frame":
          handlers.onFrame?.(message);
          break;
        case "outcome":
          handlers.onOutcome?.(message);
          socket.close();
          break;
      }
    };
    socket.onclose = () => handlers.onClose?.();
  }

  close(): void {
    this.socket.close();
  }
}
