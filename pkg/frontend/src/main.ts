import { mountApp } from "./ui/app.js";

const params = new URLSearchParams(location.search);
const server = params.get("server") ?? "http://127.0.0.1:8100";

mountApp(document.getElementById("app")!, server);
