/** Browser entry: endpoint and token come from the query string or
 * localStorage, then the app mounts and re-renders on every state change. */

import { VaultApi } from "./api.js";
import { mount } from "./dom.js";
import { App } from "./app.js";

function setting(name: string, fallback: string): string {
  const fromUrl = new URLSearchParams(window.location.search).get(name);
  if (fromUrl) {
    window.localStorage.setItem(`medvault.${name}`, fromUrl);
    return fromUrl;
  }
  return window.localStorage.getItem(`medvault.${name}`) ?? fallback;
}

const endpoint = setting("endpoint", "http://127.0.0.1:8600");
const token = setting("token", "dev-token");

const root = document.getElementById("root");
if (!root) {
  throw new Error("missing #root element");
}

const api = new VaultApi(endpoint, token);
const app = new App(api, () => mount(root, app.view()));
mount(root, app.view());
