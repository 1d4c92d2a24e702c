// Websocket plumbing: reconnect banner, one message out per user action.

import type { ClientMessage } from "./protocol.js";

export interface Transport {
  send(msg: ClientMessage): void;
  readonly connected: boolean;
}

export function connect(
  url: string,
  onFrame: (raw: string) => void,
  onStatus: (connected: boolean) => void,
): Transport {
  let ws: WebSocket | null = null;
  let connected = false;

  const open = () => {
    ws = new WebSocket(url);
    ws.onopen = () => {
      connected = true;
      onStatus(true);
    };
    ws.onmessage = (ev) => onFrame(String(ev.data));
    ws.onclose = () => {
      connected = false;
      onStatus(false);
      setTimeout(open, 1000);
    };
    ws.onerror = () => ws?.close();
  };
  open();

  return {
    send(msg: ClientMessage) {
      if (ws && connected) {
        ws.send(JSON.stringify(msg));
      }
    },
    get connected() {
      return connected;
    },
  };
}
