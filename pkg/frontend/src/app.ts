import { initHistory } from './history';
import { initUploadPanel } from './upload';

export const DISCLAIMER = 'Screening tool only — not a substitute for laboratory diagnosis.';

const ABOUT_HTML = `
  <h2>About</h2>
  <p>This tool screens for anemia from a photograph of the palpebral conjunctiva
  (inner eyelid) or fingernail bed. It classifies the image as anemic or
  non-anemic with a confidence score; it does not measure haemoglobin.</p>
  <h3>Capture guidelines</h3>
  <ul>
    <li>Use indirect natural light; avoid flash and strong shadows.</li>
    <li>Clean the camera lens and hold the phone about 15 cm from the eye.</li>
    <li>For conjunctiva photos, gently pull the lower eyelid down so the inner
        membrane fills the frame.</li>
    <li>For fingernail photos, remove nail polish and photograph the nail bed
        straight on.</li>
  </ul>
  <p>Positive screens should be referred for a laboratory complete blood count.</p>
`;

type Route = 'home' | 'history' | 'about';

function currentRoute(): Route {
    const hash = window.location.hash.replace(/^#\/?/, '');
    if (hash === 'history') return 'history';
    if (hash === 'about') return 'about';
    return 'home';
}

export function render(root: HTMLElement): void {
    const route = currentRoute();
    root.innerHTML = `
    <header class="topbar">
      <span class="brand">Anemia Screening</span>
      <nav>
        <a href="#/" class="${route === 'home' ? 'active' : ''}">Home</a>
        <a href="#/history" class="${route === 'history' ? 'active' : ''}">History</a>
        <a href="#/about" class="${route === 'about' ? 'active' : ''}">About</a>
      </nav>
    </header>
    <main id="page"></main>
    <footer class="disclaimer">${DISCLAIMER}</footer>
  `;
    const page = root.querySelector('#page') as HTMLElement;
    if (route === 'home') {
        initUploadPanel(page);
    } else if (route === 'history') {
        initHistory(page);
    } else {
        page.innerHTML = ABOUT_HTML;
    }
}

export function start(root: HTMLElement): void {
    render(root);
    window.addEventListener('hashchange', () => render(root));
}
