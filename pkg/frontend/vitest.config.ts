import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // the integration suite boots a real HTTP server in a child process
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
});
