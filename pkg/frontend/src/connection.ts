// Socket abstraction: the browser build talks WebSocket (one JSON per text
// frame); tests substitute a TCP line socket speaking the same protocol.

export interface LineSocketHandlers {
  onLine: (line: string) => void;
  onOpen: () => void;
  onClose: () => void;
}

export interface LineSocket {
  send(line: string): void;
  close(): void;
}

export type LineSocketFactory = (handlers: LineSocketHandlers) => LineSocket;

export function webSocketFactory(url: string): LineSocketFactory {
  return (handlers) => {
    const ws = new WebSocket(url);
    ws.onopen = () => handlers.onOpen();
    ws.onclose = () => handlers.onClose();
    ws.onerror = () => ws.close();
    ws.onmessage = (ev) => {
      for (const line of String(ev.data).split("\n")) {
        if (line.trim()) handlers.onLine(line);
      }
    };
    return {
      send: (line) => ws.send(line),
      close: () => ws.close(),
    };
  };
}

/** Reconnecting wrapper: exponential backoff from 0.5 s capped at 5 s. */
export class Connection {
  private socket: LineSocket | null = null;
  private closed = false;
  private backoffMs = 500;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private factory: LineSocketFactory,
    private handlers: LineSocketHandlers,
  ) {}

  start(): void {
    this.closed = false;
    this.dial();
  }

  private dial(): void {
    if (this.closed) return;
    this.socket = this.factory({
      onOpen: () => {
        this.backoffMs = 500;
        this.handlers.onOpen();
      },
      onLine: (line) => this.handlers.onLine(line),
      onClose: () => {
        this.socket = null;
        this.handlers.onClose();
        if (!this.closed) {
          this.timer = setTimeout(() => this.dial(), this.backoffMs);
          this.backoffMs = Math.min(this.backoffMs * 2, 5000);
        }
      },
    });
  }

  send(line: string): boolean {
    if (!this.socket) return false;
    try {
      this.socket.send(line);
      return true;
    } catch {
      return false;
    }
  }

  stop(): void {
    this.closed = true;
    if (this.timer) clearTimeout(this.timer);
    this.socket?.close();
    this.socket = null;
  }
}
