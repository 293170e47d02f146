import { defineConfig } from "vitest/config";

export default defineConfig({
  // served by the annotation service from a sub-mounted static dir, so
  // asset URLs must stay relative
  base: "./",
  build: {
    outDir: "dist",
    emptyOutDir: true,
  },
  server: {
    // dev convenience only; the built bundle is same-origin with the API
    proxy: {
      "/sequences": "http://127.0.0.1:8080",
    },
  },
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
  },
});
