import { start } from './app';
import './style.css';

start(document.getElementById('app') as HTMLElement);
